//! Identifiability certificates: only signed permutations may map the vertex
//! set onto itself.

use polyfact::checks::{check_identifiable, hexagon_vertices};
use polyfact::{Polytope, SpecialKind, VertexForm};

fn main() -> polyfact::Result<()> {
    for kind in SpecialKind::ALL {
        let rep = check_identifiable(&Polytope::special(kind, 3)?)?;
        println!("{:>8} r=3: identifiable {} ({} automorphisms)", kind.name(), rep.identifiable, rep.automorphism_count);
    }
    let rep = check_identifiable(&Polytope::pex())?;
    println!("     pex: identifiable {} ({} automorphisms)", rep.identifiable, rep.automorphism_count);

    let hex = Polytope::from_vertices(VertexForm::new(hexagon_vertices())?);
    let rep = check_identifiable(&hex)?;
    println!(" hexagon: identifiable {}", rep.identifiable);
    if let Some(w) = rep.witness {
        println!("witness (maps the hexagon onto itself):{w:.4}");
    }
    Ok(())
}
