//! Sufficiently scattered samples from the polar-domain construction, and a
//! sample set that is not.

use polyfact::checks::{check_scattered, DEFAULT_SCATTER_TOL};
use polyfact::datagen::{generate_inflated_mvie, generate_polar_domain};
use polyfact::Polytope;

fn main() -> polyfact::Result<()> {
    let p = Polytope::pex();
    let s = generate_polar_domain(&p, 30, 7)?;
    let rep = check_scattered(&s, &p, None, DEFAULT_SCATTER_TOL)?;
    println!(
        "polar domain: {} samples, {} hull facets, SS.i {}, SS.ii {}, {} tangent points",
        s.ncols(),
        rep.hull_facet_count,
        rep.ss1_holds,
        rep.ss2_holds,
        rep.tangent_polar_points.len()
    );

    // all samples inside 0.9 x MVIE: the hull cannot contain the ellipsoid
    let inner = generate_inflated_mvie(&p, 0.9, 30, 7)?;
    let rep = check_scattered(&inner, &p, None, DEFAULT_SCATTER_TOL)?;
    println!(
        "inside the MVIE: SS.i {}, {} facets cut the ellipsoid, min margin {:.3}",
        rep.ss1_holds,
        rep.cutting_facets.len(),
        rep.min_margin
    );
    Ok(())
}
