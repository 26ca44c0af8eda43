//! Small dense linear-algebra helpers shared by the geometry and solver modules.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::{Matrix, Vector};

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration.
pub fn spectral_norm_psd(m: &Matrix, max_steps: usize, tol: f64) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    // Start from the largest column so the dominant eigenvector is not
    // orthogonal to the start for any nonzero PSD matrix.
    let k = (0..n)
        .max_by(|&a, &b| m.column(a).norm().total_cmp(&m.column(b).norm()))
        .unwrap_or(0);
    let mut v: Vector = m.column(k).into_owned();
    let mut norm = v.norm();
    if norm == 0.0 {
        return 0.0;
    }
    v /= norm;
    let mut lambda = 0.0;
    for _ in 0..max_steps {
        let w = m * &v;
        norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm;
        v = w / norm;
        if (next - lambda).abs() <= tol * next {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// `log det` of a symmetric positive definite matrix, `None` if the Cholesky
/// factorization fails.
pub fn log_det_spd(m: &Matrix) -> Option<f64> {
    let chol = Cholesky::new(m.clone())?;
    Some(chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum())
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn inverse_spd(m: &Matrix) -> Option<Matrix> {
    let chol = Cholesky::new(m.clone())?;
    Some(symmetrize(&chol.inverse()))
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Solves the symmetric system `a x = b`, preferring Cholesky and falling back
/// to LU when `a` is not numerically positive definite.
pub fn solve_sym(a: &Matrix, b: &Vector) -> Option<Vector> {
    if let Some(chol) = Cholesky::new(a.clone()) {
        let x = chol.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    a.clone().lu().solve(b)
}

/// Unit normal of the hyperplane through `points` (columns, `r` points in
/// `R^r`), computed as the generalized cross product of the edge vectors.
/// Returns `None` when the points do not span an `(r-1)`-dimensional affine
/// subspace.
pub fn hyperplane_normal(points: &[DVector<f64>], scale: f64) -> Option<Vector> {
    let r = points[0].len();
    if r == 1 {
        return Some(DVector::from_element(1, 1.0));
    }
    let p0 = &points[0];
    let edges = DMatrix::from_fn(r - 1, r, |i, j| points[i + 1][j] - p0[j]);
    let mut normal = DVector::zeros(r);
    for k in 0..r {
        let minor = edges.clone().remove_column(k);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        normal[k] = sign * minor.determinant();
    }
    let norm = normal.norm();
    // Generalized cross product scales like edge^(r-1).
    if norm <= 1e-10 * scale.max(1.0).powi(r as i32 - 1) {
        return None;
    }
    Some(normal / norm)
}

/// Affine rank of a set of column points.
pub fn affine_rank(points: &Matrix, tol: f64) -> usize {
    if points.ncols() <= 1 {
        return 0;
    }
    let p0 = points.column(0).into_owned();
    let diffs = Matrix::from_fn(points.nrows(), points.ncols() - 1, |i, j| {
        points[(i, j + 1)] - p0[i]
    });
    diffs.rank(tol)
}

/// Removes duplicate columns (max-norm distance `tol`), keeping first
/// occurrences in order.
pub fn dedup_columns(points: &Matrix, tol: f64) -> Matrix {
    let mut kept: Vec<Vector> = Vec::new();
    for c in points.column_iter() {
        if !kept.iter().any(|k| (k - c).amax() <= tol) {
            kept.push(c.into_owned());
        }
    }
    columns_to_matrix(points.nrows(), &kept)
}

pub fn columns_to_matrix(rows: usize, cols: &[Vector]) -> Matrix {
    Matrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

/// True when the column sets of `a` and `b` coincide up to `tol` (each column
/// of either has a partner in the other within max-norm distance `tol`).
pub fn same_point_set(a: &Matrix, b: &Matrix, tol: f64) -> bool {
    if a.nrows() != b.nrows() {
        return false;
    }
    let covered = |x: &Matrix, y: &Matrix| {
        x.column_iter()
            .all(|c| y.column_iter().any(|d| (c - d).amax() <= tol))
    };
    covered(a, b) && covered(b, a)
}

/// Nonnegative least squares `min ||a x - b||_2, x >= 0` by the
/// Lawson-Hanson active-set method.
pub fn nnls(a: &Matrix, b: &Vector, max_iter: usize) -> Vector {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * (1.0 + a.amax()) * (1.0 + b.amax()) * (n.max(1) as f64);

    let solve_passive = |passive: &[bool]| -> Vector {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let mut z = DVector::zeros(n);
        if idx.is_empty() {
            return z;
        }
        let sub = a.select_columns(idx.iter());
        let sol = sub
            .svd(true, true)
            .solve(b, 1e-14)
            .unwrap_or_else(|_| DVector::zeros(idx.len()));
        for (k, &j) in idx.iter().enumerate() {
            z[j] = sol[k];
        }
        z
    };

    for _ in 0..max_iter {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        if w[j] <= tol {
            break;
        }
        passive[j] = true;
        let mut z = solve_passive(&passive);
        let mut inner = 0;
        while (0..n).any(|i| passive[i] && z[i] <= 0.0) && inner < 3 * n + 10 {
            inner += 1;
            let mut alpha = f64::INFINITY;
            for i in 0..n {
                if passive[i] && z[i] <= 0.0 {
                    let denom = x[i] - z[i];
                    if denom > 0.0 {
                        alpha = alpha.min(x[i] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            x += (&z - &x) * alpha;
            for i in 0..n {
                if passive[i] && x[i] <= tol {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
            z = solve_passive(&passive);
        }
        x = z;
        for v in x.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    x
}

/// Smallest and largest singular values.
pub fn singular_range(m: &Matrix) -> (f64, f64) {
    let sv = m.clone().svd(false, false).singular_values;
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = sv.iter().cloned().fold(0.0, f64::max);
    (min, max)
}

/// Serde adapter writing a matrix as a list of rows.
pub mod serde_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::Matrix;

    pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Matrix> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        Some(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).ok_or_else(|| serde::de::Error::custom("ragged matrix rows"))
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(m: &Option<Matrix>, s: S) -> Result<S::Ok, S::Error> {
            m.as_ref().map(to_rows).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Matrix>, D::Error> {
            match Option::<Vec<Vec<f64>>>::deserialize(d)? {
                None => Ok(None),
                Some(rows) => from_rows(&rows)
                    .map(Some)
                    .ok_or_else(|| serde::de::Error::custom("ragged matrix rows")),
            }
        }
    }
}
