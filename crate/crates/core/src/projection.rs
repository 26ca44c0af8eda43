//! Euclidean projections onto the supported polytope families.
//!
//! Boxes are clipped coordinate-wise, l1 balls and simplices use the
//! sort-based thresholding rule, and factored (feature-spec) polytopes cycle
//! through their constraint-wise projections.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::{FeatureConstraint, FeatureSpec, Polytope, Representation, SpecialKind};
use crate::{Matrix, Vector};

/// Sweep count used for feature-spec polytopes unless overridden.
pub const DEFAULT_SWEEPS: usize = 5;

/// Violation allowed before the final feasibility clamp kicks in.
const CLAMP_TOL: f64 = 1e-12;

/// Columns per rayon task when projecting a whole matrix.
const PAR_MIN_COLUMNS: usize = 256;

/// Clips every coordinate into `[lo, hi]`.
pub fn project_binf(x: &Vector, lo: f64, hi: f64) -> Vector {
    x.map(|v| v.clamp(lo, hi))
}

/// Projection onto `{y : ||y||_1 <= radius}`, or onto
/// `{y >= 0 : sum(y) <= radius}` when `nonneg` is set.
pub fn project_l1(x: &Vector, radius: f64, nonneg: bool) -> Vector {
    let mut y = x.clone();
    let mut scratch = Vec::with_capacity(x.len());
    l1_in_place(y.as_mut_slice(), radius, nonneg, &mut scratch);
    y
}

fn l1_in_place(v: &mut [f64], radius: f64, nonneg: bool, scratch: &mut Vec<f64>) {
    if nonneg {
        let pos_sum: f64 = v.iter().map(|a| a.max(0.0)).sum();
        if pos_sum <= radius {
            for a in v.iter_mut() {
                *a = a.max(0.0);
            }
            return;
        }
        let theta = threshold(v.iter().copied(), radius, scratch);
        for a in v.iter_mut() {
            *a = (*a - theta).max(0.0);
        }
    } else {
        let norm: f64 = v.iter().map(|a| a.abs()).sum();
        if norm <= radius {
            return;
        }
        let theta = threshold(v.iter().map(|a| a.abs()), radius, scratch);
        for a in v.iter_mut() {
            *a = a.signum() * (a.abs() - theta).max(0.0);
        }
    }
}

/// Soft threshold `theta` with `sum(max(u - theta, 0)) = radius`; requires the
/// positive part of `u` to sum to more than `radius`.
fn threshold(u: impl Iterator<Item = f64>, radius: f64, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(u);
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &a) in scratch.iter().enumerate() {
        cumsum += a;
        let t = (cumsum - radius) / (k + 1) as f64;
        if a - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    theta
}

/// How the constraint-wise projections of a feature spec are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureScheme {
    /// Cyclic passes with Dykstra's correction terms; converges to the exact
    /// projection.
    #[default]
    Dykstra,
    /// Plain alternation `y <- P_k(y)`; converges to some feasible point, not
    /// necessarily the nearest one.
    Alternating,
}

/// Projection onto a feature-spec polytope using `sweeps` Dykstra passes
/// followed by a feasibility clamp.
pub fn project_featurespec(x: &Vector, spec: &FeatureSpec, sweeps: usize) -> Result<Vector> {
    project_featurespec_with(x, spec, sweeps, FeatureScheme::Dykstra)
}

pub fn project_featurespec_with(
    x: &Vector,
    spec: &FeatureSpec,
    sweeps: usize,
    scheme: FeatureScheme,
) -> Result<Vector> {
    if sweeps == 0 {
        return Err(Error::InvalidInput("sweeps must be at least 1".into()));
    }
    if x.len() != spec.dim {
        return Err(Error::InvalidInput(format!(
            "point has dim {}, polytope has dim {}",
            x.len(),
            spec.dim
        )));
    }
    let mut y = x.clone();
    let mut work = SweepWork::new(spec);
    work.run(y.as_mut_slice(), spec, sweeps, scheme);
    if !spec.contains(&y, CLAMP_TOL) {
        let anchor = feasible_anchor(spec)?;
        clamp_toward(y.as_mut_slice(), anchor.as_slice(), spec);
    }
    Ok(y)
}

struct SweepWork {
    corrections: Vec<Vec<f64>>,
    sub: Vec<f64>,
    scratch: Vec<f64>,
}

impl SweepWork {
    fn new(spec: &FeatureSpec) -> Self {
        let corrections = spec
            .constraints
            .iter()
            .map(|c| vec![0.0; constraint_indices(c).len()])
            .collect();
        Self { corrections, sub: Vec::new(), scratch: Vec::new() }
    }

    fn run(&mut self, y: &mut [f64], spec: &FeatureSpec, sweeps: usize, scheme: FeatureScheme) {
        for p in &mut self.corrections {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        for _ in 0..sweeps {
            for (k, c) in spec.constraints.iter().enumerate() {
                let idx = constraint_indices(c);
                self.sub.clear();
                self.sub.extend(idx.iter().map(|&i| y[i]));
                if scheme == FeatureScheme::Dykstra {
                    for (s, p) in self.sub.iter_mut().zip(&self.corrections[k]) {
                        *s += p;
                    }
                }
                let before = self.sub.clone();
                project_constraint(c, &mut self.sub, &mut self.scratch);
                if scheme == FeatureScheme::Dykstra {
                    for ((p, b), s) in self.corrections[k].iter_mut().zip(&before).zip(&self.sub) {
                        *p = b - s;
                    }
                }
                for (&i, &s) in idx.iter().zip(&self.sub) {
                    y[i] = s;
                }
            }
        }
    }
}

fn constraint_indices(c: &FeatureConstraint) -> &[usize] {
    match c {
        FeatureConstraint::Box { index, .. } => std::slice::from_ref(index),
        FeatureConstraint::L1Ball { indices, .. } | FeatureConstraint::SimplexCap { indices, .. } => {
            indices
        }
    }
}

fn project_constraint(c: &FeatureConstraint, sub: &mut [f64], scratch: &mut Vec<f64>) {
    match c {
        FeatureConstraint::Box { lo, hi, .. } => sub[0] = sub[0].clamp(*lo, *hi),
        FeatureConstraint::L1Ball { radius, .. } => l1_in_place(sub, *radius, false, scratch),
        FeatureConstraint::SimplexCap { radius, .. } => {
            let total: f64 = sub.iter().sum();
            if total > *radius {
                let shift = (total - radius) / sub.len() as f64;
                sub.iter_mut().for_each(|v| *v -= shift);
            }
        }
    }
}

/// A point satisfying every constraint, found by running alternating
/// projections from the box midpoint.
fn feasible_anchor(spec: &FeatureSpec) -> Result<Vector> {
    let mut y = Vector::zeros(spec.dim);
    for c in &spec.constraints {
        if let FeatureConstraint::Box { index, lo, hi } = c {
            y[*index] = 0.5 * (lo + hi);
        }
    }
    let mut work = SweepWork::new(spec);
    for _ in 0..10_000 {
        if spec.contains(&y, 0.0) {
            return Ok(y);
        }
        work.run(y.as_mut_slice(), spec, 1, FeatureScheme::Alternating);
    }
    Err(Error::Infeasible("no feasible point found for feature spec".into()))
}

/// Moves `y` onto the segment towards `anchor` until it is feasible.
fn clamp_toward(y: &mut [f64], anchor: &[f64], spec: &FeatureSpec) {
    let start: Vec<f64> = y.to_vec();
    let at = |t: f64| -> Vector {
        Vector::from_iterator(start.len(), start.iter().zip(anchor).map(|(s, a)| a + t * (s - a)))
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if spec.contains(&at(mid), 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    y.copy_from_slice(at(lo).as_slice());
}

/// Projection algorithm attached to a target polytope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    Closed,
    DuchiL1,
    Cyclic { sweeps: usize, scheme: FeatureScheme },
}

#[derive(Debug, Clone)]
enum Kernel {
    Box { lo: f64, hi: f64 },
    L1 { nonneg: bool },
    Feature { spec: FeatureSpec, sweeps: usize, scheme: FeatureScheme, anchor: Vector },
}

/// Projection onto a fixed polytope.
#[derive(Debug, Clone)]
pub struct Projector {
    dim: usize,
    method: Method,
    kernel: Kernel,
}

impl Projector {
    /// Picks the natural method for `p`: closed form for the box polytopes,
    /// l1 thresholding for the cross-polytope and simplex, cyclic passes for
    /// feature specs.
    pub fn new(p: &Polytope) -> Result<Self> {
        Self::with_sweeps(p, DEFAULT_SWEEPS, FeatureScheme::default())
    }

    pub fn with_sweeps(p: &Polytope, sweeps: usize, scheme: FeatureScheme) -> Result<Self> {
        let dim = p.dim();
        if let Some(kind) = p.special_kind() {
            let (method, kernel) = match kind {
                SpecialKind::BInf => (Method::Closed, Kernel::Box { lo: -1.0, hi: 1.0 }),
                SpecialKind::BInfPlus => (Method::Closed, Kernel::Box { lo: 0.0, hi: 1.0 }),
                SpecialKind::B1 => (Method::DuchiL1, Kernel::L1 { nonneg: false }),
                SpecialKind::B1Plus => (Method::DuchiL1, Kernel::L1 { nonneg: true }),
            };
            return Ok(Self { dim, method, kernel });
        }
        match p.representation() {
            Representation::Feature(spec) => {
                if sweeps == 0 {
                    return Err(Error::InvalidInput("sweeps must be at least 1".into()));
                }
                let anchor = feasible_anchor(spec)?;
                Ok(Self {
                    dim,
                    method: Method::Cyclic { sweeps, scheme },
                    kernel: Kernel::Feature { spec: spec.clone(), sweeps, scheme, anchor },
                })
            }
            _ => Err(Error::InvalidInput(
                "no projector for general H-form or V-form polytopes; use a special kind or a feature spec"
                    .into(),
            )),
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn project(&self, x: &Vector) -> Vector {
        let mut y = x.clone();
        let mut buf = Buffers::default();
        self.project_slice(y.as_mut_slice(), &mut buf);
        y
    }

    /// Projects every column of `s` in place.
    pub fn project_columns(&self, s: &mut Matrix) {
        assert_eq!(s.nrows(), self.dim, "row count must match polytope dimension");
        let r = self.dim;
        if r == 0 || s.ncols() == 0 {
            return;
        }
        let data = s.as_mut_slice();
        if data.len() / r >= 2 * PAR_MIN_COLUMNS {
            data.par_chunks_mut(r * PAR_MIN_COLUMNS).for_each(|block| {
                let mut buf = Buffers::default();
                for col in block.chunks_exact_mut(r) {
                    self.project_slice(col, &mut buf);
                }
            });
        } else {
            let mut buf = Buffers::default();
            for col in data.chunks_exact_mut(r) {
                self.project_slice(col, &mut buf);
            }
        }
    }

    fn project_slice(&self, col: &mut [f64], buf: &mut Buffers) {
        match &self.kernel {
            Kernel::Box { lo, hi } => col.iter_mut().for_each(|v| *v = v.clamp(*lo, *hi)),
            Kernel::L1 { nonneg } => l1_in_place(col, 1.0, *nonneg, &mut buf.scratch),
            Kernel::Feature { spec, sweeps, scheme, anchor } => {
                let work = buf.sweep.get_or_insert_with(|| SweepWork::new(spec));
                work.run(col, spec, *sweeps, *scheme);
                let v = Vector::from_column_slice(col);
                if !spec.contains(&v, CLAMP_TOL) {
                    clamp_toward(col, anchor.as_slice(), spec);
                }
            }
        }
    }
}

#[derive(Default)]
struct Buffers {
    scratch: Vec<f64>,
    sweep: Option<SweepWork>,
}
