//! Convex polytopes in halfspace (H), vertex (V) and factored feature-spec form.
//!
//! Representation conversion is done by brute-force subset enumeration and is
//! restricted to small dimension (`r <= 6`, at most 64 facets or vertices).

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::linalg::{affine_rank, columns_to_matrix, dedup_columns, hyperplane_normal};
use crate::{lp, Error, Matrix, Result, Vector};

/// Largest dimension accepted by the brute-force conversions.
pub const MAX_CONVERSION_DIM: usize = 6;
/// Largest number of vertices or facets accepted by the brute-force conversions.
pub const MAX_CONVERSION_ITEMS: usize = 64;
/// Largest subset size for which an L1 ball is expanded into halfspaces.
pub const MAX_L1_EXPANSION: usize = 20;
/// Vertex or facet caches of special polytopes are skipped beyond this count.
pub const MAX_CACHED_ITEMS: usize = 1 << 20;

/// Tolerances used by the representation conversions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConversionOptions {
    /// Feasibility slack and dedup distance for enumerated vertices.
    pub vertex_tol: f64,
    /// Side test and dedup distance for unit-normalized facets.
    pub facet_tol: f64,
}

impl Default for ConversionOptions {
    fn default() -> Self {
        Self {
            vertex_tol: 1e-8,
            facet_tol: 1e-9,
        }
    }
}

/// The four polytopes with closed-form MVIEs and polars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecialKind {
    /// Unit l-infinity ball (antisparse).
    BInf,
    /// Unit l1 ball (sparse).
    B1,
    /// `[0, 1]^r` (antisparse nonnegative).
    BInfPlus,
    /// Unit simplex with the origin, `{x >= 0, 1'x <= 1}` (sparse nonnegative).
    B1Plus,
}

impl SpecialKind {
    pub const ALL: [SpecialKind; 4] = [
        SpecialKind::BInf,
        SpecialKind::B1,
        SpecialKind::BInfPlus,
        SpecialKind::B1Plus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SpecialKind::BInf => "binf",
            SpecialKind::B1 => "b1",
            SpecialKind::BInfPlus => "binfplus",
            SpecialKind::B1Plus => "b1plus",
        }
    }

    pub fn facet_count(self, r: usize) -> usize {
        match self {
            SpecialKind::BInf | SpecialKind::BInfPlus => 2 * r,
            SpecialKind::B1 => 1usize.checked_shl(r as u32).unwrap_or(usize::MAX),
            SpecialKind::B1Plus => r + 1,
        }
    }

    pub fn vertex_count(self, r: usize) -> usize {
        match self {
            SpecialKind::BInf | SpecialKind::BInfPlus => {
                1usize.checked_shl(r as u32).unwrap_or(usize::MAX)
            }
            SpecialKind::B1 => 2 * r,
            SpecialKind::B1Plus => r + 1,
        }
    }
}

impl fmt::Display for SpecialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SpecialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "binf" | "antisparse" => Ok(SpecialKind::BInf),
            "b1" | "sparse" => Ok(SpecialKind::B1),
            "binfplus" | "binf+" | "antisparsenonneg" => Ok(SpecialKind::BInfPlus),
            "b1plus" | "b1+" | "sparsenonneg" => Ok(SpecialKind::B1Plus),
            other => Err(Error::InvalidInput(format!("unknown special polytope '{other}'"))),
        }
    }
}

/// `{x | a_i'x <= b_i}` with the normals `a_i` stored as rows.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfspaceForm {
    normals: Matrix,
    offsets: Vector,
}

impl HalfspaceForm {
    /// Validates nonzero normals and boundedness, and drops duplicate
    /// halfspaces (compared after unit normalization).
    pub fn new(normals: Matrix, offsets: Vector) -> Result<Self> {
        let h = Self::checked_shape(normals, offsets)?;
        if !h.is_bounded()? {
            return Err(Error::Unbounded);
        }
        Ok(h)
    }

    fn checked_shape(normals: Matrix, offsets: Vector) -> Result<Self> {
        if normals.nrows() != offsets.len() {
            return Err(Error::InvalidInput(format!(
                "{} normals but {} offsets",
                normals.nrows(),
                offsets.len()
            )));
        }
        if normals.ncols() == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if normals.iter().chain(offsets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite halfspace data".into()));
        }
        for i in 0..normals.nrows() {
            if normals.row(i).norm() == 0.0 {
                return Err(Error::InvalidInput(format!("normal {i} is zero")));
            }
        }
        Ok(Self::new_unchecked(normals, offsets).deduplicated(1e-9))
    }

    pub(crate) fn new_unchecked(normals: Matrix, offsets: Vector) -> Self {
        Self { normals, offsets }
    }

    fn deduplicated(self, tol: f64) -> Self {
        let mut keep: Vec<usize> = Vec::new();
        let mut seen: Vec<(Vector, f64)> = Vec::new();
        for i in 0..self.len() {
            let norm = self.normals.row(i).norm();
            let a = self.normal(i) / norm;
            let b = self.offsets[i] / norm;
            if seen
                .iter()
                .any(|(sa, sb)| (sa - &a).amax() <= tol && (sb - b).abs() <= tol * (1.0 + b.abs()))
            {
                continue;
            }
            seen.push((a, b));
            keep.push(i);
        }
        if keep.len() == self.len() {
            return self;
        }
        Self {
            normals: self.normals.select_rows(keep.iter()),
            offsets: self.offsets.select_rows(keep.iter()),
        }
    }

    pub fn dim(&self) -> usize {
        self.normals.ncols()
    }

    /// Number of halfspaces.
    pub fn len(&self) -> usize {
        self.normals.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn normals(&self) -> &Matrix {
        &self.normals
    }

    pub fn offsets(&self) -> &Vector {
        &self.offsets
    }

    pub fn normal(&self, i: usize) -> Vector {
        self.normals.row(i).transpose()
    }

    pub fn offset(&self, i: usize) -> f64 {
        self.offsets[i]
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        let ax = &self.normals * x;
        ax.iter().zip(self.offsets.iter()).all(|(l, b)| *l <= b + tol)
    }

    /// Bounded iff every coordinate direction has a finite support value.
    pub fn is_bounded(&self) -> Result<bool> {
        let r = self.dim();
        for k in 0..r {
            for sign in [1.0, -1.0] {
                let mut dir = Vector::zeros(r);
                dir[k] = sign;
                match lp::support(&self.normals, &self.offsets, &dir) {
                    Ok(Some(_)) => {}
                    Ok(None) => return Err(Error::Degenerate("empty polytope".into())),
                    Err(Error::Unbounded) => return Ok(false),
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(true)
    }

    /// Halfspaces of `{alpha * x + shift | x in self}` for `alpha > 0`.
    pub fn affine_image(&self, alpha: f64, shift: &Vector) -> Self {
        let offsets = &self.offsets * alpha + &self.normals * shift;
        Self::new_unchecked(self.normals.clone(), offsets)
    }
}

/// `conv(v_1, ..., v_m)` with the vertices stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexForm {
    vertices: Matrix,
}

impl VertexForm {
    /// Accepts a full-dimensional set of extreme points. The extreme-point
    /// property is verified by LP when there are at most 64 columns.
    pub fn new(vertices: Matrix) -> Result<Self> {
        let v = Self::validated_points(vertices)?;
        if v.ncols() <= MAX_CONVERSION_ITEMS {
            let extreme = lp::extreme_point_indices(&v, 1e-9)?;
            if extreme.len() != v.ncols() {
                return Err(Error::InvalidInput(format!(
                    "{} of {} columns are not extreme points",
                    v.ncols() - extreme.len(),
                    v.ncols()
                )));
            }
        }
        Ok(Self { vertices: v })
    }

    /// Keeps only the extreme points of the given point cloud.
    pub fn hull_of(points: &Matrix) -> Result<Self> {
        let v = Self::validated_points(points.clone())?;
        let extreme = lp::extreme_point_indices(&v, 1e-9)?;
        Ok(Self {
            vertices: v.select_columns(extreme.iter()),
        })
    }

    fn validated_points(points: Matrix) -> Result<Matrix> {
        let r = points.nrows();
        if r == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite vertex".into()));
        }
        let v = dedup_columns(&points, 1e-12);
        let scale = v.amax().max(1.0);
        if v.ncols() < r + 1 || affine_rank(&v, 1e-10 * scale) < r {
            return Err(Error::Degenerate(
                "vertex set is not full-dimensional".into(),
            ));
        }
        Ok(v)
    }

    pub(crate) fn new_unchecked(vertices: Matrix) -> Self {
        Self { vertices }
    }

    pub fn dim(&self) -> usize {
        self.vertices.nrows()
    }

    /// Number of vertices.
    pub fn len(&self) -> usize {
        self.vertices.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn vertices(&self) -> &Matrix {
        &self.vertices
    }

    pub fn vertex(&self, j: usize) -> Vector {
        self.vertices.column(j).into_owned()
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        lp::in_convex_hull(&self.vertices, x, tol).unwrap_or(false)
    }
}

/// One constraint of a factored polytope description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum FeatureConstraint {
    /// `lo <= x[index] <= hi`.
    Box { index: usize, lo: f64, hi: f64 },
    /// `||x[indices]||_1 <= radius`.
    L1Ball { indices: Vec<usize>, radius: f64 },
    /// `sum(x[indices]) <= radius`; nonnegativity comes from `Box` entries.
    SimplexCap { indices: Vec<usize>, radius: f64 },
}

impl FeatureConstraint {
    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        match self {
            FeatureConstraint::Box { index, lo, hi } => x[*index] >= lo - tol && x[*index] <= hi + tol,
            FeatureConstraint::L1Ball { indices, radius } => {
                indices.iter().map(|&i| x[i].abs()).sum::<f64>() <= radius + tol
            }
            FeatureConstraint::SimplexCap { indices, radius } => {
                indices.iter().map(|&i| x[i]).sum::<f64>() <= radius + tol
            }
        }
    }
}

/// A polytope given as an intersection of coordinate boxes and l1 balls or
/// simplex caps on coordinate subsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub dim: usize,
    pub constraints: Vec<FeatureConstraint>,
}

impl FeatureSpec {
    pub fn new(dim: usize, constraints: Vec<FeatureConstraint>) -> Result<Self> {
        let spec = Self { dim, constraints };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        let mut bounded = vec![false; self.dim];
        let check_index = |i: usize| {
            if i >= self.dim {
                Err(Error::InvalidInput(format!("index {i} out of range for dim {}", self.dim)))
            } else {
                Ok(())
            }
        };
        for c in &self.constraints {
            match c {
                FeatureConstraint::Box { index, lo, hi } => {
                    check_index(*index)?;
                    if !(lo < hi) {
                        return Err(Error::InvalidInput(format!("box on {index} has lo >= hi")));
                    }
                    bounded[*index] = true;
                }
                FeatureConstraint::L1Ball { indices, radius } => {
                    if indices.is_empty() || !(*radius > 0.0) {
                        return Err(Error::InvalidInput("l1 ball needs indices and radius > 0".into()));
                    }
                    for &i in indices {
                        check_index(i)?;
                        bounded[i] = true;
                    }
                }
                FeatureConstraint::SimplexCap { indices, radius } => {
                    if indices.is_empty() || !(*radius > 0.0) {
                        return Err(Error::InvalidInput("simplex cap needs indices and radius > 0".into()));
                    }
                    for &i in indices {
                        check_index(i)?;
                    }
                }
            }
        }
        if let Some(k) = bounded.iter().position(|b| !b) {
            return Err(Error::InvalidInput(format!(
                "coordinate {k} is not bounded by any box or l1 ball"
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.constraints.iter().all(|c| c.contains(x, tol))
    }

    /// The composite example polytope: `x1, x2 in [-1, 1]`, `x3 in [0, 1]`,
    /// `|x1| + |x2| <= 1`, `|x2| + |x3| <= 1`.
    pub fn pex() -> Self {
        use FeatureConstraint::*;
        Self {
            dim: 3,
            constraints: vec![
                Box { index: 0, lo: -1.0, hi: 1.0 },
                Box { index: 1, lo: -1.0, hi: 1.0 },
                Box { index: 2, lo: 0.0, hi: 1.0 },
                L1Ball { indices: vec![0, 1], radius: 1.0 },
                L1Ball { indices: vec![1, 2], radius: 1.0 },
            ],
        }
    }

    fn for_special(kind: SpecialKind, r: usize) -> Self {
        use FeatureConstraint::*;
        let all: Vec<usize> = (0..r).collect();
        let boxes = |lo: f64| (0..r).map(move |index| Box { index, lo, hi: 1.0 });
        let constraints = match kind {
            SpecialKind::BInf => boxes(-1.0).collect(),
            SpecialKind::BInfPlus => boxes(0.0).collect(),
            SpecialKind::B1 => vec![L1Ball { indices: all, radius: 1.0 }],
            SpecialKind::B1Plus => boxes(0.0)
                .chain(std::iter::once(SimplexCap { indices: all, radius: 1.0 }))
                .collect(),
        };
        Self { dim: r, constraints }
    }
}

/// Vertices of the composite example polytope (columns).
pub fn pex_vertices() -> Matrix {
    Matrix::from_row_slice(
        3,
        6,
        &[
            1.0, -1.0, 0.0, 0.0, 1.0, -1.0, //
            0.0, 0.0, 1.0, -1.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, 1.0, 1.0,
        ],
    )
}

/// The defining representation of a [`Polytope`].
#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    Halfspace(HalfspaceForm),
    Vertex(VertexForm),
    Feature(FeatureSpec),
}

/// A convex polytope with one defining representation and optional cached
/// alternate forms describing the same set.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    dim: usize,
    repr: Representation,
    hform: Option<HalfspaceForm>,
    vform: Option<VertexForm>,
    special: Option<SpecialKind>,
}

impl Polytope {
    /// One of the four special polytopes with both H- and V-form caches.
    pub fn special(kind: SpecialKind, r: usize) -> Result<Self> {
        make_special(kind, r)
    }

    pub fn from_halfspaces(h: HalfspaceForm) -> Self {
        Self {
            dim: h.dim(),
            repr: Representation::Halfspace(h),
            hform: None,
            vform: None,
            special: None,
        }
    }

    pub fn from_vertices(v: VertexForm) -> Self {
        Self {
            dim: v.dim(),
            repr: Representation::Vertex(v),
            hform: None,
            vform: None,
            special: None,
        }
    }

    pub fn from_feature_spec(spec: FeatureSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            dim: spec.dim,
            repr: Representation::Feature(spec),
            hform: None,
            vform: None,
            special: None,
        })
    }

    /// The composite example polytope in feature-spec form.
    pub fn pex() -> Self {
        Self::from_feature_spec(FeatureSpec::pex()).expect("valid fixture")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn special_kind(&self) -> Option<SpecialKind> {
        self.special
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    pub fn feature_spec(&self) -> Option<&FeatureSpec> {
        match &self.repr {
            Representation::Feature(s) => Some(s),
            _ => None,
        }
    }

    /// H-form: cached, defining, or converted.
    pub fn halfspaces(&self) -> Result<Cow<'_, HalfspaceForm>> {
        if let Some(h) = &self.hform {
            return Ok(Cow::Borrowed(h));
        }
        match &self.repr {
            Representation::Halfspace(h) => Ok(Cow::Borrowed(h)),
            Representation::Feature(s) => Ok(Cow::Owned(feature_spec_to_halfspaces(s)?)),
            Representation::Vertex(v) => Ok(Cow::Owned(vertices_to_halfspaces(
                v,
                &ConversionOptions::default(),
            )?)),
        }
    }

    /// V-form: cached, defining, or converted.
    pub fn vertices(&self) -> Result<Cow<'_, VertexForm>> {
        if let Some(v) = &self.vform {
            return Ok(Cow::Borrowed(v));
        }
        match &self.repr {
            Representation::Vertex(v) => Ok(Cow::Borrowed(v)),
            _ => {
                let h = self.halfspaces()?;
                Ok(Cow::Owned(halfspaces_to_vertices(&h, &ConversionOptions::default())?))
            }
        }
    }

    /// Fills both caches by conversion.
    pub fn with_cached_forms(mut self) -> Result<Self> {
        let h = self.halfspaces()?.into_owned();
        let v = self.vertices()?.into_owned();
        self.hform = Some(h);
        self.vform = Some(v);
        Ok(self)
    }

    pub fn cached_halfspaces(&self) -> Option<&HalfspaceForm> {
        self.hform.as_ref()
    }

    pub fn cached_vertices(&self) -> Option<&VertexForm> {
        self.vform.as_ref()
    }

    /// Cross-checks that the H- and V-forms describe the same set: every
    /// vertex satisfies every halfspace and every halfspace is tight at no
    /// fewer than `r` vertices.
    pub fn check_consistency(&self, tol: f64) -> Result<()> {
        let h = self.halfspaces()?;
        let v = self.vertices()?;
        let r = self.dim;
        for j in 0..v.len() {
            if !h.contains(&v.vertex(j), tol) {
                return Err(Error::InvalidInput(format!("vertex {j} violates a halfspace")));
            }
        }
        let products = h.normals() * v.vertices();
        for i in 0..h.len() {
            let tight = (0..v.len())
                .filter(|&j| (products[(i, j)] - h.offset(i)).abs() <= tol * (1.0 + h.offset(i).abs()))
                .count();
            if tight < r {
                return Err(Error::InvalidInput(format!(
                    "halfspace {i} is tight at {tight} < {r} vertices"
                )));
            }
        }
        Ok(())
    }

    /// Membership with slack `tol`.
    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        contains(self, x, tol)
    }

    /// Polar about an interior point, in V-form.
    pub fn polar(&self, d: &Vector) -> Result<Polytope> {
        polar(self, d)
    }
}

fn sign_patterns(n: usize) -> impl Iterator<Item = Vec<f64>> {
    (0..(1usize << n)).map(move |mask| {
        (0..n)
            .map(|k| if mask >> k & 1 == 1 { -1.0 } else { 1.0 })
            .collect()
    })
}

/// Builds a special polytope with H- and V-form caches. A cache whose size
/// would exceed 2^20 items is skipped with a warning.
pub fn make_special(kind: SpecialKind, r: usize) -> Result<Polytope> {
    if r == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    let facets = kind.facet_count(r);
    let hform = if facets > MAX_CACHED_ITEMS {
        warn!("{kind} in dimension {r}: skipping H-form cache ({facets} facets)");
        None
    } else {
        let (normals, offsets) = match kind {
            SpecialKind::BInf | SpecialKind::BInfPlus => {
                let mut a = Matrix::zeros(2 * r, r);
                let mut b = Vector::zeros(2 * r);
                for k in 0..r {
                    a[(k, k)] = 1.0;
                    b[k] = 1.0;
                    a[(r + k, k)] = -1.0;
                    b[r + k] = if kind == SpecialKind::BInf { 1.0 } else { 0.0 };
                }
                (a, b)
            }
            SpecialKind::B1 => {
                let rows: Vec<Vec<f64>> = sign_patterns(r).collect();
                let a = Matrix::from_fn(rows.len(), r, |i, j| rows[i][j]);
                (a, Vector::from_element(rows.len(), 1.0))
            }
            SpecialKind::B1Plus => {
                let mut a = Matrix::zeros(r + 1, r);
                let mut b = Vector::zeros(r + 1);
                a.row_mut(0).fill(1.0);
                b[0] = 1.0;
                for k in 0..r {
                    a[(k + 1, k)] = -1.0;
                }
                (a, b)
            }
        };
        Some(HalfspaceForm::new_unchecked(normals, offsets))
    };

    let vertices = kind.vertex_count(r);
    let vform = if vertices > MAX_CACHED_ITEMS {
        warn!("{kind} in dimension {r}: skipping V-form cache ({vertices} vertices)");
        None
    } else {
        let cols: Vec<Vector> = match kind {
            SpecialKind::BInf => sign_patterns(r).map(Vector::from_vec).collect(),
            SpecialKind::BInfPlus => sign_patterns(r)
                .map(|s| Vector::from_iterator(r, s.iter().map(|v| if *v < 0.0 { 1.0 } else { 0.0 })))
                .collect(),
            SpecialKind::B1 => (0..r)
                .flat_map(|k| {
                    [1.0, -1.0].map(|s| {
                        let mut e = Vector::zeros(r);
                        e[k] = s;
                        e
                    })
                })
                .collect(),
            SpecialKind::B1Plus => std::iter::once(Vector::zeros(r))
                .chain((0..r).map(|k| {
                    let mut e = Vector::zeros(r);
                    e[k] = 1.0;
                    e
                }))
                .collect(),
        };
        Some(VertexForm::new_unchecked(columns_to_matrix(r, &cols)))
    };

    Ok(Polytope {
        dim: r,
        repr: Representation::Feature(FeatureSpec::for_special(kind, r)),
        hform,
        vform,
        special: Some(kind),
    })
}

/// Expands a feature spec: two halfspaces per box, `2^|J|` sign patterns per
/// l1 ball and one halfspace per simplex cap, deduplicated.
pub fn feature_spec_to_halfspaces(spec: &FeatureSpec) -> Result<HalfspaceForm> {
    spec.validate()?;
    let r = spec.dim;
    let mut rows: Vec<Vector> = Vec::new();
    let mut offsets: Vec<f64> = Vec::new();
    for c in &spec.constraints {
        match c {
            FeatureConstraint::Box { index, lo, hi } => {
                let mut a = Vector::zeros(r);
                a[*index] = 1.0;
                rows.push(a.clone());
                offsets.push(*hi);
                rows.push(-a);
                offsets.push(-*lo);
            }
            FeatureConstraint::L1Ball { indices, radius } => {
                if indices.len() > MAX_L1_EXPANSION {
                    return Err(Error::TooLarge {
                        what: "l1 ball subset size",
                        limit: MAX_L1_EXPANSION,
                        got: indices.len(),
                    });
                }
                for signs in sign_patterns(indices.len()) {
                    let mut a = Vector::zeros(r);
                    for (&i, s) in indices.iter().zip(&signs) {
                        a[i] = *s;
                    }
                    rows.push(a);
                    offsets.push(*radius);
                }
            }
            FeatureConstraint::SimplexCap { indices, radius } => {
                let mut a = Vector::zeros(r);
                for &i in indices {
                    a[i] = 1.0;
                }
                rows.push(a);
                offsets.push(*radius);
            }
        }
    }
    let normals = Matrix::from_fn(rows.len(), r, |i, j| rows[i][j]);
    HalfspaceForm::checked_shape(normals, Vector::from_vec(offsets))
}

/// Polar of `p` about the interior point `d`: the convex hull of
/// `a_i / (b_i - a_i'd)`, i.e. `(p - d)^*`.
pub fn polar(p: &Polytope, d: &Vector) -> Result<Polytope> {
    if d.len() != p.dim() {
        return Err(Error::InvalidInput("interior point has wrong dimension".into()));
    }
    let h = p.halfspaces()?;
    let mut cols = Vec::with_capacity(h.len());
    for i in 0..h.len() {
        let a = h.normal(i);
        let slack = h.offset(i) - a.dot(d);
        if slack <= 1e-12 * (1.0 + h.offset(i).abs() + a.norm() * d.norm()) {
            return Err(Error::NotInterior);
        }
        cols.push(a / slack);
    }
    let points = dedup_columns(&columns_to_matrix(p.dim(), &cols), 1e-12);
    let v = if p.special_kind().is_some() {
        // Special H-forms carry no redundant halfspaces.
        VertexForm::new_unchecked(points)
    } else if points.ncols() <= 4 * MAX_CONVERSION_ITEMS {
        VertexForm::hull_of(&points)?
    } else {
        warn!("polar with {} points: skipping extreme-point filtering", points.ncols());
        VertexForm::new_unchecked(points)
    };
    Ok(Polytope::from_vertices(v))
}

fn check_conversion_limits(r: usize, items: usize) -> Result<()> {
    if r > MAX_CONVERSION_DIM {
        return Err(Error::TooLarge {
            what: "conversion dimension",
            limit: MAX_CONVERSION_DIM,
            got: r,
        });
    }
    if items > MAX_CONVERSION_ITEMS {
        return Err(Error::TooLarge {
            what: "conversion input size",
            limit: MAX_CONVERSION_ITEMS,
            got: items,
        });
    }
    Ok(())
}

/// Facet enumeration by brute force over `r`-subsets of the vertices.
pub fn vertices_to_halfspaces(v: &VertexForm, opts: &ConversionOptions) -> Result<HalfspaceForm> {
    check_conversion_limits(v.dim(), v.len())?;
    hull_facets(v.vertices(), opts)
}

/// Facets of the convex hull of arbitrary points (no size limit; cost grows
/// as `C(m, r)`).
pub(crate) fn hull_facets(points: &Matrix, opts: &ConversionOptions) -> Result<HalfspaceForm> {
    let r = points.nrows();
    let pts = dedup_columns(points, 1e-12);
    let m = pts.ncols();
    let scale = pts.amax().max(1.0);
    if m < r + 1 || affine_rank(&pts, 1e-10 * scale) < r {
        return Err(Error::Degenerate("vertex set is not full-dimensional".into()));
    }
    let cols: Vec<Vector> = pts.column_iter().map(|c| c.into_owned()).collect();
    let side_tol = opts.facet_tol * scale;
    let mut normals: Vec<Vector> = Vec::new();
    let mut offsets: Vec<f64> = Vec::new();

    for subset in (0..m).combinations(r) {
        let chosen: Vec<Vector> = subset.iter().map(|&j| cols[j].clone()).collect();
        let Some(n) = hyperplane_normal(&chosen, scale) else {
            continue;
        };
        let b = n.dot(&chosen[0]);
        let (mut above, mut below) = (false, false);
        for c in &cols {
            let s = n.dot(c) - b;
            if s > side_tol {
                above = true;
            } else if s < -side_tol {
                below = true;
            }
            if above && below {
                break;
            }
        }
        let (n, b) = match (above, below) {
            (false, _) => (n, b),
            (true, false) => (-n, -b),
            (true, true) => continue,
        };
        if normals
            .iter()
            .zip(&offsets)
            .any(|(a, o)| (a - &n).amax() <= opts.facet_tol * 10.0 && (o - b).abs() <= side_tol * 10.0)
        {
            continue;
        }
        normals.push(n);
        offsets.push(b);
    }
    let a = Matrix::from_fn(normals.len(), r, |i, j| normals[i][j]);
    Ok(HalfspaceForm::new_unchecked(a, Vector::from_vec(offsets)))
}

/// Vertex enumeration by brute force over `r`-subsets of the facets.
pub fn halfspaces_to_vertices(h: &HalfspaceForm, opts: &ConversionOptions) -> Result<VertexForm> {
    let r = h.dim();
    check_conversion_limits(r, h.len())?;
    if !h.is_bounded()? {
        return Err(Error::Unbounded);
    }
    let rows: Vec<Vector> = (0..h.len()).map(|i| h.normal(i)).collect();
    let mut found: Vec<Vector> = Vec::new();
    for subset in (0..h.len()).combinations(r) {
        let a = Matrix::from_fn(r, r, |i, j| rows[subset[i]][j]);
        let row_scale: f64 = subset.iter().map(|&i| rows[i].norm()).product();
        let lu = a.lu();
        if lu.determinant().abs() <= 1e-12 * row_scale {
            continue;
        }
        let b = Vector::from_iterator(r, subset.iter().map(|&i| h.offset(i)));
        let Some(x) = lu.solve(&b) else { continue };
        let feasible = (0..h.len()).all(|i| h.offset(i) - rows[i].dot(&x) >= -opts.vertex_tol * (1.0 + h.offset(i).abs()));
        if feasible && !found.iter().any(|f| (f - &x).amax() <= opts.vertex_tol) {
            found.push(x);
        }
    }
    if found.len() < r + 1 {
        return Err(Error::Degenerate(format!(
            "halfspaces define a set with only {} vertices",
            found.len()
        )));
    }
    Ok(VertexForm::new_unchecked(columns_to_matrix(r, &found)))
}

/// Membership with slack `tol`: closed-form for special and feature-spec
/// polytopes, halfspace test for H-forms, LP for V-forms.
pub fn contains(p: &Polytope, x: &Vector, tol: f64) -> bool {
    if x.len() != p.dim() {
        return false;
    }
    match &p.repr {
        Representation::Feature(s) => s.contains(x, tol),
        Representation::Halfspace(h) => h.contains(x, tol),
        Representation::Vertex(v) => match &p.hform {
            Some(h) => h.contains(x, tol),
            None => v.contains(x, tol),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn has_halfspace(h: &HalfspaceForm, a: &Vector, b: f64) -> bool {
        let (an, bn) = (a / a.norm(), b / a.norm());
        (0..h.len()).any(|i| {
            let n = h.normal(i).norm();
            (h.normal(i) / n - &an).amax() < 1e-9 && (h.offset(i) / n - bn).abs() < 1e-9
        })
    }

    #[test]
    fn binf_square() {
        let p = make_special(SpecialKind::BInf, 2).unwrap();
        let h = p.cached_halfspaces().unwrap();
        assert_eq!(h.len(), 4);
        for (a, b) in [
            (dvector![1.0, 0.0], 1.0),
            (dvector![-1.0, 0.0], 1.0),
            (dvector![0.0, 1.0], 1.0),
            (dvector![0.0, -1.0], 1.0),
        ] {
            assert!(has_halfspace(h, &a, b));
        }
        let expected = dmatrix![1.0, 1.0, -1.0, -1.0; 1.0, -1.0, 1.0, -1.0];
        assert!(crate::linalg::same_point_set(p.cached_vertices().unwrap().vertices(), &expected, 0.0));
    }

    #[test]
    fn b1plus_triangle() {
        let p = make_special(SpecialKind::B1Plus, 2).unwrap();
        let expected = dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0];
        assert!(crate::linalg::same_point_set(p.vertices().unwrap().vertices(), &expected, 0.0));
        let h = p.halfspaces().unwrap();
        assert_eq!(h.len(), 3);
        assert!(has_halfspace(&h, &dvector![1.0, 1.0], 1.0));
        assert!(has_halfspace(&h, &dvector![-1.0, 0.0], 0.0));
        assert!(has_halfspace(&h, &dvector![0.0, -1.0], 0.0));
    }

    #[test]
    fn b1_cross_polytope() {
        let p = make_special(SpecialKind::B1, 3).unwrap();
        let v = p.vertices().unwrap();
        assert_eq!(v.len(), 6);
        let h = p.halfspaces().unwrap();
        assert_eq!(h.len(), 8);
        for i in 0..8 {
            assert!(h.normal(i).iter().all(|x| x.abs() == 1.0));
            assert_eq!(h.offset(i), 1.0);
        }
    }

    #[test]
    fn special_counts_and_consistency() {
        for kind in SpecialKind::ALL {
            for r in 1..=4 {
                let p = make_special(kind, r).unwrap();
                assert_eq!(p.halfspaces().unwrap().len(), kind.facet_count(r), "{kind} r={r}");
                assert_eq!(p.vertices().unwrap().len(), kind.vertex_count(r), "{kind} r={r}");
                p.check_consistency(1e-8).unwrap();
            }
        }
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(make_special(SpecialKind::BInf, 0).is_err());
    }

    #[test]
    fn large_special_skips_vertex_cache() {
        let p = make_special(SpecialKind::BInf, 21).unwrap();
        assert!(p.cached_vertices().is_none());
        assert_eq!(p.cached_halfspaces().unwrap().len(), 42);
    }

    #[test]
    fn box_only_spec() {
        let spec = FeatureSpec::new(1, vec![FeatureConstraint::Box { index: 0, lo: -1.0, hi: 1.0 }]).unwrap();
        let h = feature_spec_to_halfspaces(&spec).unwrap();
        assert_eq!(h.len(), 2);
        assert!(has_halfspace(&h, &dvector![1.0], 1.0));
        assert!(has_halfspace(&h, &dvector![-1.0], 1.0));
    }

    #[test]
    fn diamond_spec() {
        let spec = FeatureSpec::new(
            2,
            vec![FeatureConstraint::L1Ball { indices: vec![0, 1], radius: 1.0 }],
        )
        .unwrap();
        let h = feature_spec_to_halfspaces(&spec).unwrap();
        assert_eq!(h.len(), 4);
        for a in [dvector![1.0, 1.0], dvector![1.0, -1.0], dvector![-1.0, 1.0], dvector![-1.0, -1.0]] {
            assert!(has_halfspace(&h, &a, 1.0));
        }
    }

    #[test]
    fn pex_spec_expansion() {
        // Boxes: +-e1 <= 1, +-e2 <= 1, e3 <= 1, -e3 <= 0 (6); |x1|+|x2| <= 1 (4);
        // |x2|+|x3| <= 1 (4). No pair coincides after normalization.
        let h = feature_spec_to_halfspaces(&FeatureSpec::pex()).unwrap();
        assert_eq!(h.len(), 14);
        assert!(has_halfspace(&h, &dvector![0.0, 0.0, -1.0], 0.0));
        assert!(has_halfspace(&h, &dvector![0.0, -1.0, 1.0], 1.0));
        assert!(has_halfspace(&h, &dvector![-1.0, 1.0, 0.0], 1.0));
    }

    #[test]
    fn feature_spec_validation_errors() {
        assert!(FeatureSpec::new(2, vec![FeatureConstraint::Box { index: 2, lo: 0.0, hi: 1.0 }]).is_err());
        assert!(FeatureSpec::new(1, vec![FeatureConstraint::Box { index: 0, lo: 1.0, hi: 1.0 }]).is_err());
        assert!(FeatureSpec::new(
            2,
            vec![FeatureConstraint::Box { index: 0, lo: 0.0, hi: 1.0 }]
        )
        .is_err());
        let big = FeatureSpec::new(
            21,
            vec![FeatureConstraint::L1Ball { indices: (0..21).collect(), radius: 1.0 }],
        )
        .unwrap();
        assert!(matches!(feature_spec_to_halfspaces(&big), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn duplicate_halfspaces_removed() {
        let a = dmatrix![1.0, 0.0; 2.0, 0.0; -1.0, 0.0; 0.0, 1.0; 0.0, -1.0];
        let h = HalfspaceForm::new(a, dvector![1.0, 2.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(h.len(), 4);
    }

    #[test]
    fn unbounded_rejected() {
        let a = dmatrix![1.0, 0.0; 0.0, 1.0];
        assert!(matches!(HalfspaceForm::new(a.clone(), dvector![1.0, 1.0]), Err(Error::Unbounded)));
        let h = HalfspaceForm::new_unchecked(a, dvector![1.0, 1.0]);
        assert!(matches!(halfspaces_to_vertices(&h, &ConversionOptions::default()), Err(Error::Unbounded)));
    }

    #[test]
    fn square_facets_from_vertices() {
        let v = VertexForm::new(dmatrix![1.0, 1.0, -1.0, -1.0; 1.0, -1.0, 1.0, -1.0]).unwrap();
        let h = vertices_to_halfspaces(&v, &ConversionOptions::default()).unwrap();
        assert_eq!(h.len(), 4);
        assert!(has_halfspace(&h, &dvector![1.0, 0.0], 1.0));
        assert!(has_halfspace(&h, &dvector![0.0, -1.0], 1.0));
    }

    #[test]
    fn degenerate_vertices_rejected() {
        // three points on the line x + y = 1 (e1, e2 and their midpoint) in r = 2
        let flat = dmatrix![1.0, 0.0, 0.5; 0.0, 1.0, 0.5];
        assert!(matches!(VertexForm::new(flat.clone()), Err(Error::Degenerate(_))));
        let raw = VertexForm::new_unchecked(flat);
        assert!(matches!(
            vertices_to_halfspaces(&raw, &ConversionOptions::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn non_extreme_column_rejected() {
        let v = dmatrix![0.0, 1.0, 0.0, 0.2; 0.0, 0.0, 1.0, 0.2];
        assert!(VertexForm::new(v.clone()).is_err());
        assert_eq!(VertexForm::hull_of(&v).unwrap().len(), 3);
    }

    #[test]
    fn cube_vertices_from_halfspaces() {
        let p = make_special(SpecialKind::BInf, 3).unwrap();
        let v = halfspaces_to_vertices(p.cached_halfspaces().unwrap(), &ConversionOptions::default()).unwrap();
        assert!(crate::linalg::same_point_set(v.vertices(), p.cached_vertices().unwrap().vertices(), 1e-12));
    }

    #[test]
    fn pex_facets_match_spec_expansion() {
        let v = VertexForm::new(pex_vertices()).unwrap();
        let facets = vertices_to_halfspaces(&v, &ConversionOptions::default()).unwrap();
        let expanded = feature_spec_to_halfspaces(&FeatureSpec::pex()).unwrap();
        // The 14 expanded halfspaces contain 7 redundant ones; the hull has 7 facets.
        assert_eq!(facets.len(), 7);
        for i in 0..facets.len() {
            assert!(has_halfspace(&expanded, &facets.normal(i), facets.offset(i)));
        }
        let back = halfspaces_to_vertices(&expanded, &ConversionOptions::default()).unwrap();
        assert!(crate::linalg::same_point_set(back.vertices(), &pex_vertices(), 1e-9));
    }

    #[test]
    fn membership_examples() {
        let binf = make_special(SpecialKind::BInf, 2).unwrap();
        assert!(contains(&binf, &dvector![1.0, 1.0], 0.0));
        let b1 = make_special(SpecialKind::B1, 2).unwrap();
        assert!(!contains(&b1, &dvector![0.6, 0.6], 0.0));
        assert!(contains(&Polytope::pex(), &dvector![0.0, 0.0, 0.375], 0.0));
        let vform = Polytope::from_vertices(VertexForm::new(pex_vertices()).unwrap());
        assert!(vform.contains(&dvector![0.0, 0.0, 0.375], 0.0));
        assert!(!vform.contains(&dvector![0.6, 0.6, 0.0], 1e-9));
    }

    #[test]
    fn polar_of_square_is_diamond() {
        let p = make_special(SpecialKind::BInf, 2).unwrap();
        let q = polar(&p, &dvector![0.0, 0.0]).unwrap();
        let expected = dmatrix![1.0, -1.0, 0.0, 0.0; 0.0, 0.0, 1.0, -1.0];
        assert!(crate::linalg::same_point_set(q.vertices().unwrap().vertices(), &expected, 1e-9));
    }

    #[test]
    fn polar_rejects_boundary_point() {
        let p = make_special(SpecialKind::BInf, 2).unwrap();
        assert!(matches!(polar(&p, &dvector![1.0, 0.0]), Err(Error::NotInterior)));
        assert!(matches!(polar(&p, &dvector![2.0, 0.0]), Err(Error::NotInterior)));
    }

    #[test]
    fn polar_of_pex_drops_redundant_halfspaces() {
        let q = polar(&Polytope::pex(), &dvector![0.0, 0.0, 0.375]).unwrap();
        assert_eq!(q.vertices().unwrap().len(), 7);
    }

    #[test]
    fn affine_image_of_halfspaces() {
        let p = make_special(SpecialKind::BInf, 2).unwrap();
        let h = p.cached_halfspaces().unwrap().affine_image(2.0, &dvector![1.0, 0.0]);
        assert!(h.contains(&dvector![3.0, 2.0], 0.0));
        assert!(!h.contains(&dvector![-1.5, 0.0], 0.0));
    }

    #[test]
    fn special_names_round_trip() {
        for kind in SpecialKind::ALL {
            assert_eq!(kind.name().parse::<SpecialKind>().unwrap(), kind);
        }
        assert!("cube".parse::<SpecialKind>().is_err());
    }
}
