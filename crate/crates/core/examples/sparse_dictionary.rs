//! Sparse dictionary recovery: 64-dimensional observations of 16 sparse
//! sources in the l1 ball.

use std::time::Instant;

use polyfact::datagen::{generate_mixing, generate_sparse_l1};
use polyfact::factorizer::{factorize, FactorizationProblem};
use polyfact::metrics::{match_factors, sir};
use polyfact::{Polytope, SpecialKind};

fn main() -> polyfact::Result<()> {
    let (r, m, n) = (16, 64, 2000);
    let s_g = generate_sparse_l1(r, n, 3, 0)?;
    let h_g = generate_mixing(m, r, 0)?;
    let y = &h_g * &s_g;

    let t = Instant::now();
    let prob = FactorizationProblem::robust(y, Polytope::special(SpecialKind::B1, r)?, 0);
    let res = factorize(&prob)?;
    println!("{} iterations in {:.1?}, converged {}", res.iterations, t.elapsed(), res.converged);

    let worst_l1 = res.s.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    println!("largest column l1 norm {worst_l1:.9}");
    println!("mean SIR {:.1} dB", sir(&res.s, &s_g)?.mean_db);
    let fit = match_factors(&res.h, &h_g)?;
    println!("dictionary residual after signed permutation {:.2e}", fit.residual);
    Ok(())
}
