//! Blind recovery of P_ex sources from four noisy mixtures.
//!
//! `cargo run --release --example factorize_pex -- [snr_db] [seed]`

use polyfact::datagen::{GroundTruth, SampleGenerator};
use polyfact::factorizer::{factorize_with, FactorizationProblem};
use polyfact::metrics::sir;
use polyfact::Polytope;

fn main() -> polyfact::Result<()> {
    let mut args = std::env::args().skip(1);
    let snr_db: Option<f64> = args.next().and_then(|s| s.parse().ok());
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let p = Polytope::pex();
    let gt = GroundTruth::generate(&p, SampleGenerator::PolarDomain { l: 30 }, 4, 0, snr_db, seed)?;
    println!("Y is {}x{}, SNR {:?} dB", gt.y_noisy.nrows(), gt.y_noisy.ncols(), snr_db);

    let prob = FactorizationProblem::robust(gt.y_noisy.clone(), p, seed);
    let res = factorize_with(&prob, |st| {
        if st.iteration % 500 == 0 {
            let score = sir(st.s, &gt.s_g).map(|s| s.mean_db).unwrap_or(f64::NAN);
            println!("  iter {:5}  objective {:+.6e}  SIR {score:6.1} dB", st.iteration, st.objective);
        }
    })?;
    let score = sir(&res.s, &gt.s_g)?;
    println!(
        "{} iterations, converged {}, per-source SIR {:.1?} dB, mean {:.1} dB",
        res.iterations, res.converged, score.per_source_db, score.mean_db
    );
    Ok(())
}
