//! Recovery scores: signal-to-interference ratio after signed-permutation
//! alignment, and column matching of mixing matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

pub const SIR_CAP_DB: f64 = 300.0;
const INTERFERENCE_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirScore {
    pub per_source_db: Vec<f64>,
    pub mean_db: f64,
    /// `permutation[i]` is the true source matched to estimated row `i`.
    pub permutation: Vec<usize>,
    pub signs: Vec<f64>,
}

/// SIR of `s_est` against `s_g` through the transfer `G = S_est S_g^+`.
pub fn sir(s_est: &Matrix, s_g: &Matrix) -> Result<SirScore> {
    if s_est.shape() != s_g.shape() {
        return Err(Error::InvalidInput(format!(
            "shape mismatch: {:?} vs {:?}",
            s_est.shape(),
            s_g.shape()
        )));
    }
    let g = transfer(s_est, s_g)?;
    Ok(sir_from_transfer(&g))
}

/// Least-squares transfer `G` with `S_est ~ G S_g`.
pub fn transfer(s_est: &Matrix, s_g: &Matrix) -> Result<Matrix> {
    let r = s_g.nrows();
    let gram = s_g * s_g.transpose();
    let sv = gram.clone().svd(false, false).singular_values;
    let (min, max) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if r == 0 || !(min > 1e-12 * max) || max == 0.0 {
        return Err(Error::Singular("reference sources are rank deficient".into()));
    }
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Singular("reference sources are rank deficient".into()))?;
    Ok(s_est * s_g.transpose() * inv)
}

pub fn sir_from_transfer(g: &Matrix) -> SirScore {
    let r = g.nrows();
    // Row-normalized magnitudes keep the assignment invariant to row scaling.
    let mut weight = g.abs();
    for mut row in weight.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    let permutation = max_weight_assignment(&weight);
    let mut per_source_db = Vec::with_capacity(r);
    let mut signs = Vec::with_capacity(r);
    for i in 0..r {
        let j = permutation[i];
        let signal = g[(i, j)] * g[(i, j)];
        let interference: f64 = (0..g.ncols()).filter(|&k| k != j).map(|k| g[(i, k)] * g[(i, k)]).sum();
        let db = 10.0 * (signal / interference.max(INTERFERENCE_FLOOR)).log10();
        per_source_db.push(if db.is_nan() { f64::NEG_INFINITY } else { db.min(SIR_CAP_DB) });
        signs.push(if g[(i, j)] < 0.0 { -1.0 } else { 1.0 });
    }
    let mean_db = per_source_db.iter().sum::<f64>() / r.max(1) as f64;
    SirScore { per_source_db, mean_db, permutation, signs }
}

/// Assignment maximizing the summed weight (Hungarian algorithm on the
/// negated weights). `result[i]` is the column assigned to row `i`.
pub fn max_weight_assignment(w: &Matrix) -> Vec<usize> {
    let neg = -w;
    hungarian(&neg)
}

/// Minimum-cost perfect assignment for a square cost matrix, O(n^3).
pub fn hungarian(cost: &Matrix) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "cost matrix must be square");
    // 1-based potentials over rows (u) and columns (v); p[j] = row matched to column j.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorMatch {
    /// `permutation[i]` is the true column matched to estimated column `i`.
    pub permutation: Vec<usize>,
    /// `H_est[:, i] ~ scales[i] * H_g[:, permutation[i]]`.
    pub scales: Vec<f64>,
    pub signs: Vec<f64>,
    /// `||H_est - aligned H_g||_F / ||H_est||_F`.
    pub residual: f64,
}

/// Matches columns of `h_est` to columns of `h_g` by absolute cosine
/// similarity and reports the alignment residual.
pub fn match_factors(h_est: &Matrix, h_g: &Matrix) -> Result<FactorMatch> {
    if h_est.shape() != h_g.shape() {
        return Err(Error::InvalidInput(format!(
            "shape mismatch: {:?} vs {:?}",
            h_est.shape(),
            h_g.shape()
        )));
    }
    let r = h_g.ncols();
    for (name, m) in [("estimate", h_est), ("reference", h_g)] {
        if m.rank(1e-10 * m.amax().max(1e-300)) < r {
            return Err(Error::Singular(format!("{name} mixing matrix is rank deficient")));
        }
    }
    let unit = |m: &Matrix| {
        let mut m = m.clone();
        for mut c in m.column_iter_mut() {
            let n = c.norm();
            c /= n;
        }
        m
    };
    let cos = (unit(h_est).transpose() * unit(h_g)).abs();
    let permutation = max_weight_assignment(&cos);
    let mut aligned = Matrix::zeros(h_g.nrows(), r);
    let mut scales = Vec::with_capacity(r);
    for i in 0..r {
        let col: Vector = h_g.column(permutation[i]).into_owned();
        let s = h_est.column(i).dot(&col) / col.norm_squared();
        aligned.set_column(i, &(col * s));
        scales.push(s);
    }
    let residual = (h_est - aligned).norm() / h_est.norm();
    let signs = scales.iter().map(|s| if *s < 0.0 { -1.0 } else { 1.0 }).collect();
    Ok(FactorMatch { permutation, scales, signs, residual })
}
