//! Maximum-volume inscribed ellipsoids: closed forms against the barrier
//! solver, and the John-condition check.

use polyfact::mvie::{mvie_closed_form, mvie_solve_detailed, verify_john, DEFAULT_TOL};
use polyfact::{Polytope, SpecialKind};

fn main() -> polyfact::Result<()> {
    let p = Polytope::special(SpecialKind::B1Plus, 4)?;
    let h = p.halfspaces()?;
    let sol = mvie_solve_detailed(&h, DEFAULT_TOL)?;
    let exact = mvie_closed_form(SpecialKind::B1Plus, 4);
    println!(
        "b1plus r=4: {} Newton steps, |C - C*| = {:.1e}, |g - g*| = {:.1e}",
        sol.newton_iterations,
        (sol.ellipsoid.c() - exact.c()).norm(),
        (sol.ellipsoid.g() - exact.g()).norm()
    );

    let pex = Polytope::pex();
    let h = pex.halfspaces()?;
    let e = mvie_solve_detailed(&h, DEFAULT_TOL)?.ellipsoid;
    println!("P_ex center {:.6?}", e.g().as_slice());
    println!("P_ex C diagonal {:.6?}", e.c().diagonal().as_slice());
    let john = verify_john(&e, &h, 1e-6)?;
    println!("{} contact facets, plausible MVIE: {}", john.contact_count, john.is_plausible_mvie);
    Ok(())
}
