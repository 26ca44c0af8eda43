//! Euclidean projections onto the supported polytope families.

use polyfact::projection::{project_featurespec_with, FeatureScheme, Projector};
use polyfact::{FeatureSpec, Polytope, SpecialKind, Vector};

fn main() -> polyfact::Result<()> {
    let x = Vector::from_vec(vec![1.7, -0.3, 0.2]);
    for kind in SpecialKind::ALL {
        let p = Polytope::special(kind, 3)?;
        let proj = Projector::new(&p)?;
        println!("{:>8} ({:?}): {:?}", kind.name(), proj.method(), proj.project(&x).as_slice());
    }

    // P_ex: Dykstra sweeps against plain alternation
    let spec = FeatureSpec::pex();
    let z = Vector::from_vec(vec![0.9, 0.9, 0.9]);
    for scheme in [FeatureScheme::Dykstra, FeatureScheme::Alternating] {
        let y = project_featurespec_with(&z, &spec, 5, scheme)?;
        println!("{scheme:?}: {:.4?}, distance {:.4}", y.as_slice(), (&y - &z).norm());
    }
    Ok(())
}
