//! Thin wrappers over the `microlp` simplex solver for the handful of linear
//! programs the geometry code needs.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::{Error, Matrix, Vector};

/// A free variable as the difference of two nonnegative ones; microlp can
/// stall on free variables whose optimal face is unbounded.
#[derive(Clone, Copy)]
struct FreeVar {
    plus: microlp::Variable,
    minus: microlp::Variable,
}

impl FreeVar {
    fn new(p: &mut Problem, obj: f64) -> Self {
        Self {
            plus: p.add_var(obj, (0.0, f64::INFINITY)),
            minus: p.add_var(-obj, (0.0, f64::INFINITY)),
        }
    }

    fn terms(self, coef: f64) -> [(microlp::Variable, f64); 2] {
        [(self.plus, coef), (self.minus, -coef)]
    }

    fn value(self, s: &microlp::Solution) -> f64 {
        s.var_value(self.plus) - s.var_value(self.minus)
    }
}

fn solve(p: &Problem) -> Result<Option<microlp::Solution>, Error> {
    match p.solve() {
        Ok(outcome) => outcome
            .into_solution()
            .map(Some)
            .map_err(|_| Error::Lp("solve interrupted".into())),
        Err(microlp::Error::Infeasible) => Ok(None),
        Err(microlp::Error::Unbounded) => Err(Error::Unbounded),
        Err(e) => Err(Error::Lp(e.to_string())),
    }
}

/// Support value `max dir·x` over `{x | normals·x <= offsets}`.
/// `Ok(None)` when the polyhedron is empty, `Err(Unbounded)` when unbounded.
pub fn support(normals: &Matrix, offsets: &Vector, dir: &Vector) -> Result<Option<f64>, Error> {
    let r = normals.ncols();
    let mut p = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = (0..r).map(|k| FreeVar::new(&mut p, dir[k])).collect();
    for i in 0..normals.nrows() {
        let terms: Vec<_> = (0..r).flat_map(|k| vars[k].terms(normals[(i, k)])).collect();
        p.add_constraint(terms.as_slice(), ComparisonOp::Le, offsets[i]);
    }
    Ok(solve(&p)?.map(|s| s.objective()))
}

/// Chebyshev center: the center and radius of the largest Euclidean ball in
/// `{x | normals·x <= offsets}`.
pub fn chebyshev_center(normals: &Matrix, offsets: &Vector) -> Result<(Vector, f64), Error> {
    let r = normals.ncols();
    let mut p = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = (0..r).map(|_| FreeVar::new(&mut p, 0.0)).collect();
    let radius = p.add_var(1.0, (0.0, f64::INFINITY));
    for i in 0..normals.nrows() {
        let norm = normals.row(i).norm();
        let mut terms: Vec<_> = (0..r).flat_map(|k| vars[k].terms(normals[(i, k)])).collect();
        terms.push((radius, norm));
        p.add_constraint(terms.as_slice(), ComparisonOp::Le, offsets[i]);
    }
    let sol = solve(&p)?.ok_or_else(|| Error::Degenerate("empty polytope".into()))?;
    let center = Vector::from_iterator(r, vars.iter().map(|v| v.value(&sol)));
    Ok((center, sol.var_value(radius)))
}

/// Whether `x` lies in the convex hull of the columns of `points`, allowing a
/// per-coordinate violation of `tol`.
pub fn in_convex_hull(points: &Matrix, x: &Vector, tol: f64) -> Result<bool, Error> {
    let (r, m) = points.shape();
    if m == 0 {
        return Ok(false);
    }
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let weights: Vec<_> = (0..m).map(|_| p.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let ones: Vec<_> = weights.iter().map(|&w| (w, 1.0)).collect();
    p.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
    for k in 0..r {
        let terms: Vec<_> = (0..m).map(|j| (weights[j], points[(k, j)])).collect();
        p.add_constraint(terms.as_slice(), ComparisonOp::Le, x[k] + tol);
        p.add_constraint(terms.as_slice(), ComparisonOp::Ge, x[k] - tol);
    }
    Ok(solve(&p)?.is_some())
}

/// Indices of the columns of `points` that are extreme points of their convex
/// hull. Duplicate columns should be removed beforehand.
pub fn extreme_point_indices(points: &Matrix, tol: f64) -> Result<Vec<usize>, Error> {
    let m = points.ncols();
    let mut extreme = Vec::with_capacity(m);
    for j in 0..m {
        let others = points.clone().remove_column(j);
        let x = points.column(j).into_owned();
        if !in_convex_hull(&others, &x, tol)? {
            extreme.push(j);
        }
    }
    Ok(extreme)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn square_support_and_center() {
        let a = dmatrix![1.0, 0.0; -1.0, 0.0; 0.0, 1.0; 0.0, -1.0];
        let b = dvector![1.0, 1.0, 1.0, 1.0];
        let s = support(&a, &b, &dvector![1.0, 1.0]).unwrap().unwrap();
        assert!((s - 2.0).abs() < 1e-9);
        let (c, rad) = chebyshev_center(&a, &b).unwrap();
        assert!(c.norm() < 1e-9 && (rad - 1.0).abs() < 1e-9);
    }

    #[test]
    fn halfplane_is_unbounded() {
        let a = dmatrix![1.0, 0.0];
        let b = dvector![1.0];
        assert!(matches!(support(&a, &b, &dvector![-1.0, 0.0]), Err(Error::Unbounded)));
    }

    #[test]
    fn hull_membership_and_extremes() {
        let v = dmatrix![0.0, 1.0, 0.0, 0.25; 0.0, 0.0, 1.0, 0.25];
        assert!(in_convex_hull(&v, &dvector![0.2, 0.2], 0.0).unwrap());
        assert!(!in_convex_hull(&v, &dvector![0.6, 0.6], 1e-9).unwrap());
        assert_eq!(extreme_point_indices(&v, 1e-9).unwrap(), vec![0, 1, 2]);
    }
}
