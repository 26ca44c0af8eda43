//! The four special polytopes: representation sizes, MVIEs and polars.

use polyfact::mvie::mvie;
use polyfact::{Polytope, SpecialKind, Vector};

fn main() -> polyfact::Result<()> {
    let r = 3;
    for kind in SpecialKind::ALL {
        let p = Polytope::special(kind, r)?;
        let e = mvie(&p)?;
        let polar = p.polar(e.g())?;
        println!(
            "{:>8}: {} facets, {} vertices, MVIE center {:?}, polar has {} vertices",
            kind.name(),
            p.halfspaces()?.len(),
            p.vertices()?.len(),
            e.g().as_slice(),
            polar.vertices()?.len()
        );
    }

    // membership goes through the defining constraints, no conversion needed
    let b1 = Polytope::special(SpecialKind::B1, 12)?;
    println!("(0.5, 0.5, 0, ...) in B1(12): {}", b1.contains(&Vector::from_fn(12, |i, _| if i < 2 { 0.5 } else { 0.0 }), 1e-12));
    Ok(())
}
