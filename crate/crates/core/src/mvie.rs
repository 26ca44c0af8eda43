//! Maximum-volume inscribed ellipsoids.
//!
//! Closed forms cover the four special polytopes; general H-forms go through a
//! log-barrier Newton method over the upper triangle of `C` and the center.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inverse_spd, log_det_spd, nnls, solve_sym, symmetrize};
use crate::lp;
use crate::polytope::{HalfspaceForm, Polytope, SpecialKind};
use crate::{Matrix, Vector};

/// `{C u + g : ||u||_2 <= 1}` with `C` symmetric positive definite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "EllipsoidRepr", try_from = "EllipsoidRepr")]
pub struct Ellipsoid {
    c: Matrix,
    g: Vector,
}

#[derive(Serialize, Deserialize)]
struct EllipsoidRepr {
    c: Vec<Vec<f64>>,
    g: Vec<f64>,
}

impl From<Ellipsoid> for EllipsoidRepr {
    fn from(e: Ellipsoid) -> Self {
        Self {
            c: e.c.row_iter().map(|r| r.iter().copied().collect()).collect(),
            g: e.g.iter().copied().collect(),
        }
    }
}

impl TryFrom<EllipsoidRepr> for Ellipsoid {
    type Error = Error;

    fn try_from(r: EllipsoidRepr) -> Result<Self> {
        let n = r.g.len();
        if r.c.len() != n || r.c.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidInput("ellipsoid C must be square and match g".into()));
        }
        let flat: Vec<f64> = r.c.into_iter().flatten().collect();
        Ellipsoid::new(Matrix::from_row_slice(n, n, &flat), Vector::from_vec(r.g))
    }
}

impl Ellipsoid {
    /// Validates symmetry (within 1e-10, then symmetrized) and positive
    /// definiteness.
    pub fn new(c: Matrix, g: Vector) -> Result<Self> {
        if !c.is_square() || c.nrows() != g.len() {
            return Err(Error::InvalidInput("ellipsoid C must be square and match g".into()));
        }
        if c.iter().chain(g.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("ellipsoid has non-finite entries".into()));
        }
        if (&c - c.transpose()).amax() > 1e-10 * (1.0 + c.amax()) {
            return Err(Error::InvalidInput("ellipsoid C is not symmetric".into()));
        }
        let c = symmetrize(&c);
        if Cholesky::new(c.clone()).is_none() {
            return Err(Error::Singular("ellipsoid C is not positive definite".into()));
        }
        Ok(Self { c, g })
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn g(&self) -> &Vector {
        &self.g
    }

    pub fn log_det(&self) -> f64 {
        log_det_spd(&self.c).unwrap_or(f64::NEG_INFINITY)
    }

    /// Worst value of `||C a_i|| + a_i'g - b_i` over the facets (scaled by
    /// `||a_i||`); nonpositive iff the ellipsoid lies in the polytope.
    pub fn max_violation(&self, h: &HalfspaceForm) -> f64 {
        (0..h.len())
            .map(|i| {
                let a = h.normal(i);
                ((&self.c * &a).norm() + a.dot(&self.g) - h.offset(i)) / a.norm()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `{alpha (C u + g) + shift}`.
    pub fn affine_image(&self, alpha: f64, shift: &Vector) -> Self {
        Self { c: &self.c * alpha.abs(), g: &self.g * alpha + shift }
    }

    /// Polar about the center: `(C^{-1}, 0)`.
    pub fn polar(&self) -> Result<Ellipsoid> {
        ellipsoid_polar(self)
    }
}

/// MVIE of one of the four special polytopes.
pub fn mvie_closed_form(kind: SpecialKind, r: usize) -> Ellipsoid {
    let rf = r as f64;
    let eye = Matrix::identity(r, r);
    let (c, g) = match kind {
        SpecialKind::BInf => (eye, Vector::zeros(r)),
        SpecialKind::B1 => (eye / rf.sqrt(), Vector::zeros(r)),
        SpecialKind::BInfPlus => (eye * 0.5, Vector::from_element(r, 0.5)),
        SpecialKind::B1Plus => {
            let s = (rf + 1.0).sqrt();
            let ones = Matrix::from_element(r, r, 1.0);
            let c = (eye / s - ones * ((s - 1.0) / (rf * rf + rf))) / rf.sqrt();
            (c, Vector::from_element(r, 1.0 / (rf + 1.0)))
        }
    };
    Ellipsoid { c, g }
}

/// Polar of an ellipsoid about its own center.
pub fn ellipsoid_polar(e: &Ellipsoid) -> Result<Ellipsoid> {
    let inv = inverse_spd(&e.c).ok_or_else(|| Error::Singular("ellipsoid C is singular".into()))?;
    Ok(Ellipsoid { c: inv, g: Vector::zeros(e.dim()) })
}

/// MVIE of `p`: closed form for special polytopes, barrier solve otherwise.
pub fn mvie(p: &Polytope) -> Result<Ellipsoid> {
    if let Some(kind) = p.special_kind() {
        return Ok(mvie_closed_form(kind, p.dim()));
    }
    mvie_solve(&*p.halfspaces()?, DEFAULT_TOL)
}

pub const DEFAULT_TOL: f64 = 1e-12;
const MU_START: f64 = 1.0;
const MU_END: f64 = 1e-9;
const MAX_NEWTON: usize = 200;

/// Solver output with per-stage diagnostics.
#[derive(Debug, Clone)]
pub struct MvieSolution {
    pub ellipsoid: Ellipsoid,
    /// `(mu, log det C)` at the end of each barrier stage.
    pub stages: Vec<(f64, f64)>,
    pub newton_iterations: usize,
}

/// Solves `max log det C  s.t. ||C a_i|| + a_i'g <= b_i`.
pub fn mvie_solve(h: &HalfspaceForm, tol: f64) -> Result<Ellipsoid> {
    Ok(mvie_solve_detailed(h, tol)?.ellipsoid)
}

pub fn mvie_solve_detailed(h: &HalfspaceForm, tol: f64) -> Result<MvieSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    let r = h.dim();
    let (center, radius) = lp::chebyshev_center(h.normals(), h.offsets())?;
    if !(radius > 1e-12) {
        return Err(Error::Degenerate("polytope has empty interior".into()));
    }

    // Work in coordinates where the Chebyshev ball is the unit ball.
    let f = h.len();
    let mut a = Matrix::zeros(f, r);
    let mut b = Vector::zeros(f);
    for i in 0..f {
        let ai = h.normal(i);
        let n = ai.norm();
        a.set_row(i, &(ai.transpose() / n));
        b[i] = (h.offset(i) - ai.dot(&center)) / (n * radius);
    }
    let barrier = Barrier::new(a, b);
    let mut x = barrier.pack(&(Matrix::identity(r, r) * 0.9), &Vector::zeros(r));

    let mut stages = Vec::new();
    let mut total = 0;
    let mut mu = MU_START;
    let mut prev: Option<f64> = None;
    loop {
        let (xn, iters) = barrier.center(&x, mu, stages.len())?;
        x = xn;
        total += iters;
        let (c, _) = barrier.unpack(&x);
        let ld = log_det_spd(&c).ok_or_else(|| Error::Singular("iterate lost definiteness".into()))?;
        stages.push((mu, ld + r as f64 * radius.ln()));
        let small_change = prev.is_some_and(|p| (ld - p).abs() <= tol * (1.0 + ld.abs()));
        prev = Some(ld);
        if mu <= MU_END * 1.0001 || small_change {
            break;
        }
        mu /= 10.0;
    }

    let (c, g) = barrier.unpack(&x);
    let ellipsoid = Ellipsoid { c: symmetrize(&(c * radius)), g: g * radius + center };
    Ok(MvieSolution { ellipsoid, stages, newton_iterations: total })
}

/// `-log det C - mu * sum_i log((b_i - a_i'g)^2 - ||C a_i||^2)` over the
/// vectorized upper triangle of `C` followed by `g`.
struct Barrier {
    a: Matrix,
    b: Vector,
    r: usize,
    pairs: Vec<(usize, usize)>,
}

impl Barrier {
    fn new(a: Matrix, b: Vector) -> Self {
        let r = a.ncols();
        let pairs = (0..r).flat_map(|i| (i..r).map(move |j| (i, j))).collect();
        Self { a, b, r, pairs }
    }

    fn ntheta(&self) -> usize {
        self.pairs.len()
    }

    fn pack(&self, c: &Matrix, g: &Vector) -> Vector {
        let nt = self.ntheta();
        let mut x = Vector::zeros(nt + self.r);
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            x[k] = c[(i, j)];
        }
        x.rows_mut(nt, self.r).copy_from(g);
        x
    }

    fn unpack(&self, x: &Vector) -> (Matrix, Vector) {
        let mut c = Matrix::zeros(self.r, self.r);
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            c[(i, j)] = x[k];
            c[(j, i)] = x[k];
        }
        (c, x.rows(self.ntheta(), self.r).into_owned())
    }

    /// Barrier value, or `None` outside the domain.
    fn value(&self, x: &Vector, mu: f64) -> Option<f64> {
        let (c, g) = self.unpack(x);
        let ld = log_det_spd(&c)?;
        let mut sum = 0.0;
        for i in 0..self.a.nrows() {
            let ai = self.a.row(i).transpose();
            let s = self.b[i] - ai.dot(&g);
            let w = (&c * &ai).norm();
            if !(s > 0.0) || !(s > w) {
                return None;
            }
            sum += (s - w).ln() + (s + w).ln();
        }
        Some(-ld - mu * sum)
    }

    /// `E_k a` for the symmetric basis element of pair `k`.
    fn basis_times(&self, k: usize, a: &Vector) -> Vector {
        let (i, j) = self.pairs[k];
        let mut v = Vector::zeros(self.r);
        if i == j {
            v[i] = a[i];
        } else {
            v[i] = a[j];
            v[j] = a[i];
        }
        v
    }

    fn grad_hess(&self, x: &Vector, mu: f64) -> Option<(Vector, Matrix)> {
        let (r, nt) = (self.r, self.ntheta());
        let n = nt + r;
        let (c, g) = self.unpack(x);
        let m = inverse_spd(&c)?;
        let mut grad = Vector::zeros(n);
        let mut hess = Matrix::zeros(n, n);

        // -log det C
        let me: Vec<Matrix> = self
            .pairs
            .iter()
            .map(|&(i, j)| {
                let mut e = Matrix::zeros(r, r);
                e[(i, j)] = 1.0;
                e[(j, i)] = 1.0;
                &m * e
            })
            .collect();
        for k in 0..nt {
            grad[k] = -me[k].trace();
            for l in k..nt {
                let v = me[k].component_mul(&me[l].transpose()).sum();
                hess[(k, l)] = v;
                hess[(l, k)] = v;
            }
        }

        for i in 0..self.a.nrows() {
            let ai = self.a.row(i).transpose();
            let s = self.b[i] - ai.dot(&g);
            let w = &c * &ai;
            let q = s * s - w.norm_squared();
            if !(s > 0.0) || !(q > 0.0) {
                return None;
            }
            let jac = Matrix::from_fn(r, nt, |row, k| self.basis_times(k, &ai)[row]);
            let mut dq = Vector::zeros(n);
            dq.rows_mut(0, nt).copy_from(&(jac.transpose() * &w * -2.0));
            dq.rows_mut(nt, r).copy_from(&(&ai * (-2.0 * s)));
            grad -= &dq * (mu / q);
            // mu (dq dq' / q^2 - d2q / q), d2q = blockdiag(-2 J'J, 2 a a')
            hess += &dq * dq.transpose() * (mu / (q * q));
            let jtj = jac.transpose() * &jac * (2.0 * mu / q);
            let mut top = hess.view_mut((0, 0), (nt, nt));
            top += jtj;
            let aat = &ai * ai.transpose() * (2.0 * mu / q);
            let mut bottom = hess.view_mut((nt, nt), (r, r));
            bottom -= aat;
        }
        Some((grad, symmetrize(&hess)))
    }

    /// Damped Newton minimization of the stage objective from `x0`.
    fn center(&self, x0: &Vector, mu: f64, stage: usize) -> Result<(Vector, usize)> {
        let mut x = x0.clone();
        let mut fx = self
            .value(&x, mu)
            .ok_or_else(|| Error::Degenerate("starting point left the barrier domain".into()))?;
        for it in 0..MAX_NEWTON {
            let (grad, hess) = self
                .grad_hess(&x, mu)
                .ok_or_else(|| Error::Degenerate("iterate left the barrier domain".into()))?;
            let step = solve_sym(&hess, &(-&grad))
                .ok_or_else(|| Error::Singular("barrier Hessian is singular".into()))?;
            let decrement = -grad.dot(&step);
            if !decrement.is_finite() {
                return Err(Error::NewtonFailure { stage, iterations: it });
            }
            if decrement <= 1e-14 * (1.0 + fx.abs()) {
                return Ok((x, it));
            }
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = &x + &step * t;
                if let Some(fc) = self.value(&cand, mu) {
                    if fc <= fx - 0.25 * t * decrement {
                        x = cand;
                        fx = fc;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                // No representable decrease left: accept when already near
                // the stage minimizer.
                if decrement <= 1e-9 * (1.0 + fx.abs()) {
                    return Ok((x, it));
                }
                return Err(Error::NewtonFailure { stage, iterations: it });
            }
        }
        Err(Error::NewtonFailure { stage, iterations: MAX_NEWTON })
    }
}

/// Outcome of the John-condition check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JohnReport {
    pub contact_count: usize,
    pub is_plausible_mvie: bool,
    /// Least-squares residual of the contact-point decomposition of the
    /// identity.
    pub residual: f64,
    pub weights: Vec<f64>,
}

/// Counts tangent facets in the unit-ball frame and tests whether nonnegative
/// weights `c_i` with `sum c_i u_i u_i' = I`, `sum c_i u_i = 0` exist.
pub fn verify_john(e: &Ellipsoid, h: &HalfspaceForm, tol: f64) -> Result<JohnReport> {
    let r = e.dim();
    if h.dim() != r {
        return Err(Error::InvalidInput("ellipsoid and polytope dimensions differ".into()));
    }
    if e.max_violation(h) > tol {
        return Err(Error::Infeasible("ellipsoid is not contained in the polytope".into()));
    }
    let mut contacts: Vec<Vector> = Vec::new();
    for i in 0..h.len() {
        let a = h.normal(i);
        let n = a.norm();
        let ca = e.c() * &a;
        let gap = (h.offset(i) - a.dot(e.g()) - ca.norm()) / n;
        if gap <= tol {
            contacts.push(ca.normalize());
        }
    }
    let k = contacts.len();
    if k == 0 {
        return Ok(JohnReport { contact_count: 0, is_plausible_mvie: false, residual: 1.0, weights: vec![] });
    }
    let rows = r * r + r;
    let mut m = Matrix::zeros(rows, k);
    for (j, u) in contacts.iter().enumerate() {
        let outer = u * u.transpose();
        for (idx, v) in outer.iter().enumerate() {
            m[(idx, j)] = *v;
        }
        for p in 0..r {
            m[(r * r + p, j)] = u[p];
        }
    }
    let mut target = Vector::zeros(rows);
    for p in 0..r {
        target[p * r + p] = 1.0;
    }
    let w = nnls(&m, &target, 50 * k + 100);
    let residual = (&m * &w - &target).norm();
    Ok(JohnReport {
        contact_count: k,
        is_plausible_mvie: k >= r && residual <= 1e-4,
        residual,
        weights: w.iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::feature_spec_to_halfspaces;
    use crate::polytope::FeatureSpec;
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn special_h(kind: SpecialKind, r: usize) -> HalfspaceForm {
        Polytope::special(kind, r).unwrap().cached_halfspaces().unwrap().clone()
    }

    #[test]
    fn closed_form_examples() {
        let e = mvie_closed_form(SpecialKind::BInf, 3);
        assert_eq!(e.c(), &Matrix::identity(3, 3));
        assert_eq!(e.g(), &Vector::zeros(3));
        let e = mvie_closed_form(SpecialKind::B1Plus, 2);
        assert!((e.g() - dvector![1.0 / 3.0, 1.0 / 3.0]).amax() < 1e-15);
        assert!((e.c()[(0, 0)] - 0.32198).abs() < 1e-5);
        assert!((e.c()[(0, 1)] + 0.08628).abs() < 1e-5);
        let e = mvie_closed_form(SpecialKind::B1, 4);
        assert!((e.c() - Matrix::identity(4, 4) * 0.5).amax() < 1e-15);
    }

    #[test]
    fn closed_forms_touch_every_facet() {
        // The simplex MVIE is tangent to all r+1 facets.
        for r in 1..=5 {
            for kind in SpecialKind::ALL {
                let e = mvie_closed_form(kind, r);
                let h = special_h(kind, r);
                assert!(e.max_violation(&h).abs() < 1e-12, "{kind} r={r}");
                let rep = verify_john(&e, &h, 1e-9).unwrap();
                assert!(rep.is_plausible_mvie, "{kind} r={r}: {rep:?}");
            }
        }
    }

    #[test]
    fn solver_matches_closed_forms() {
        for r in 2..=4 {
            for kind in SpecialKind::ALL {
                let e = mvie_solve(&special_h(kind, r), DEFAULT_TOL).unwrap();
                let want = mvie_closed_form(kind, r);
                assert!((e.c() - want.c()).norm() <= 1e-6, "{kind} r={r}: {}", e.c());
                assert!((e.g() - want.g()).norm() <= 1e-6, "{kind} r={r}: {}", e.g());
            }
        }
    }

    #[test]
    fn pex_center_and_certificate() {
        let h = feature_spec_to_halfspaces(&FeatureSpec::pex()).unwrap();
        let sol = mvie_solve_detailed(&h, DEFAULT_TOL).unwrap();
        let e = &sol.ellipsoid;
        assert!((e.g() - dvector![0.0, 0.0, 0.375]).norm() < 1e-3, "{}", e.g());
        assert!(e.max_violation(&h) <= 1e-12);
        assert!(verify_john(e, &h, 1e-6).unwrap().is_plausible_mvie);
        for pair in sol.stages.windows(2) {
            assert!(pair[1].1 >= pair[0].1 - 1e-10);
        }
    }

    #[test]
    fn john_examples() {
        let h = special_h(SpecialKind::BInf, 3);
        let rep = verify_john(&mvie_closed_form(SpecialKind::BInf, 3), &h, 1e-9).unwrap();
        assert_eq!(rep.contact_count, 6);
        assert!(rep.is_plausible_mvie);
        // both of +-e_i touch, so each antipodal pair shares the unit weight
        assert!(rep.weights.iter().all(|w| (w - 0.5).abs() < 1e-9));
        let small = Ellipsoid::new(Matrix::identity(3, 3) * 0.9, Vector::zeros(3)).unwrap();
        let rep = verify_john(&small, &h, 1e-9).unwrap();
        assert_eq!(rep.contact_count, 0);
        assert!(!rep.is_plausible_mvie);
        let big = Ellipsoid::new(Matrix::identity(3, 3) * 1.1, Vector::zeros(3)).unwrap();
        assert!(verify_john(&big, &h, 1e-9).is_err());
    }

    #[test]
    fn polar_examples() {
        let p = ellipsoid_polar(&mvie_closed_form(SpecialKind::BInf, 3)).unwrap();
        assert!((p.c() - Matrix::identity(3, 3)).amax() < 1e-15);
        let p = ellipsoid_polar(&mvie_closed_form(SpecialKind::B1, 4)).unwrap();
        assert!((p.c() - Matrix::identity(4, 4) * 2.0).amax() < 1e-12);
        let p = ellipsoid_polar(&mvie_closed_form(SpecialKind::BInfPlus, 2)).unwrap();
        assert!((p.c() - Matrix::identity(2, 2) * 2.0).amax() < 1e-12);
        assert_eq!(p.g(), &Vector::zeros(2));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let e = mvie_closed_form(SpecialKind::B1Plus, 3);
        let s = serde_json::to_string(&e).unwrap();
        let back: Ellipsoid = serde_json::from_str(&s).unwrap();
        assert!((back.c() - e.c()).amax() < 1e-15);
        assert!(Ellipsoid::new(Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]), Vector::zeros(2)).is_err());
        assert!(Ellipsoid::new(Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), Vector::zeros(2)).is_err());
    }

    #[test]
    fn degenerate_rejected() {
        // x <= 0 and -x <= 0 in r=1: a single point
        let h = HalfspaceForm::new(Matrix::from_row_slice(2, 1, &[1.0, -1.0]), dvector![0.0, 0.0]);
        if let Ok(h) = h {
            assert!(mvie_solve(&h, DEFAULT_TOL).is_err());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn affine_covariance(alpha in 0.05f64..2.0, d in prop::collection::vec(-3.0f64..3.0, 3), which in 0usize..2) {
            let h = if which == 0 {
                feature_spec_to_halfspaces(&FeatureSpec::pex()).unwrap()
            } else {
                special_h(SpecialKind::B1Plus, 3)
            };
            let shift = Vector::from_vec(d);
            let base = mvie_solve(&h, DEFAULT_TOL).unwrap();
            let moved = mvie_solve(&h.affine_image(alpha, &shift), DEFAULT_TOL).unwrap();
            let want = base.affine_image(alpha, &shift);
            prop_assert!((moved.c() - want.c()).norm() <= 1e-6 * (1.0 + alpha));
            prop_assert!((moved.g() - want.g()).norm() <= 1e-6 * (1.0 + alpha));
        }
    }
}
