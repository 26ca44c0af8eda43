//! Identifiability of a polytope and sufficient scattering of a sample set.

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dedup_columns, same_point_set, serde_rows};
use crate::lp;
use crate::mvie::{mvie, Ellipsoid};
use crate::polytope::{hull_facets, ConversionOptions, Polytope};
use crate::{Matrix, Vector};

pub const MAX_IDENT_VERTICES: usize = 24;
pub const MAX_IDENT_DIM: usize = 6;
pub const MAX_SCATTER_DIM: usize = 4;
pub const MAX_SCATTER_POINTS: usize = 200;

/// Tolerance for vertex matching and for the signed-permutation test.
pub const AUTOMORPHISM_TOL: f64 = 1e-7;
/// Default membership and tangency tolerance of [`check_scattered`].
pub const DEFAULT_SCATTER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub identifiable: bool,
    /// A linear automorphism of the vertex set that is not a signed
    /// permutation.
    #[serde(with = "serde_rows::option")]
    pub witness: Option<Matrix>,
    pub automorphism_count: usize,
}

/// Enumerates the linear maps sending the vertex set onto itself and reports
/// whether all of them are signed permutations.
pub fn check_identifiable(p: &Polytope) -> Result<IdentifiabilityReport> {
    let v = p.vertices()?;
    check_identifiable_vertices(v.vertices())
}

pub fn check_identifiable_vertices(vertices: &Matrix) -> Result<IdentifiabilityReport> {
    let r = vertices.nrows();
    let verts = dedup_columns(vertices, 1e-12);
    let k = verts.ncols();
    if r > MAX_IDENT_DIM {
        return Err(Error::TooLarge { what: "identifiability dimension", limit: MAX_IDENT_DIM, got: r });
    }
    if k > MAX_IDENT_VERTICES {
        return Err(Error::TooLarge { what: "identifiability vertex count", limit: MAX_IDENT_VERTICES, got: k });
    }
    let scale = verts.amax().max(1e-300);
    let basis = independent_columns(&verts, 1e-9 * scale)
        .ok_or_else(|| Error::Degenerate("vertices do not span the space".into()))?;
    let vb = verts.select_columns(basis.iter());
    let vb_inv = vb
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("basis vertices are singular".into()))?;
    let det_b = vb.determinant().abs();
    let tol = AUTOMORPHISM_TOL * scale;

    let accepted: Vec<Matrix> = (0..k)
        .permutations(r)
        .par_bridge()
        .filter_map(|tuple| {
            let w = verts.select_columns(tuple.iter());
            // A maps the polytope onto itself, so |det A| = 1.
            if (w.determinant().abs() - det_b).abs() > 1e-7 * det_b.max(1e-300) {
                return None;
            }
            let a = &w * &vb_inv;
            maps_onto(&a, &verts, tol).then_some(a)
        })
        .collect();

    let witness = accepted
        .iter()
        .filter(|a| !is_signed_permutation(a, AUTOMORPHISM_TOL))
        .min_by(|x, y| witness_key(x).total_cmp(&witness_key(y)))
        .cloned();
    Ok(IdentifiabilityReport {
        identifiable: witness.is_none(),
        witness,
        automorphism_count: accepted.len(),
    })
}

// Deterministic witness choice independent of thread scheduling.
fn witness_key(a: &Matrix) -> f64 {
    a.iter().enumerate().map(|(i, v)| v * (i as f64 + 1.0).sqrt()).sum()
}

/// Greedy choice of `r` linearly independent columns.
fn independent_columns(m: &Matrix, tol: f64) -> Option<Vec<usize>> {
    let r = m.nrows();
    let mut chosen: Vec<usize> = Vec::new();
    for j in 0..m.ncols() {
        let mut trial = chosen.clone();
        trial.push(j);
        if m.select_columns(trial.iter()).rank(tol) == trial.len() {
            chosen = trial;
            if chosen.len() == r {
                return Some(chosen);
            }
        }
    }
    None
}

/// True when `a` permutes the columns of `verts` (within `tol`).
fn maps_onto(a: &Matrix, verts: &Matrix, tol: f64) -> bool {
    let images = a * verts;
    let k = verts.ncols();
    let mut used = vec![false; k];
    for img in images.column_iter() {
        let hit = (0..k).find(|&j| !used[j] && (verts.column(j) - img).amax() <= tol);
        match hit {
            Some(j) => used[j] = true,
            None => return false,
        }
    }
    true
}

/// One entry of magnitude 1 per row and column, zeros elsewhere.
pub fn is_signed_permutation(a: &Matrix, tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let n = a.nrows();
    let mut col_hit = vec![false; n];
    for i in 0..n {
        let mut hits = 0;
        for j in 0..n {
            let v = a[(i, j)].abs();
            if (v - 1.0).abs() <= tol {
                if col_hit[j] {
                    return false;
                }
                col_hit[j] = true;
                hits += 1;
            } else if v > tol {
                return false;
            }
        }
        if hits != 1 {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterReport {
    pub ss1_holds: bool,
    pub ss2_holds: bool,
    /// Polar images `a_j / (b_j - a_j'g)` of the hull facets tangent to the
    /// ellipsoid.
    pub tangent_polar_points: Vec<Vec<f64>>,
    /// Sample columns outside the polytope.
    pub violating_points: Vec<Vec<f64>>,
    /// Hull facets that cut into the ellipsoid, as `[a.., b]`.
    pub cutting_facets: Vec<Vec<f64>>,
    pub hull_facet_count: usize,
    /// Smallest `b_j - a_j'g - ||C a_j||` over hull facets (unit normals).
    pub min_margin: f64,
}

/// Tests the two sufficient-scattering conditions for the columns of `s`
/// against the polytope `p` and its MVIE (computed when `ellipsoid` is
/// `None`).
pub fn check_scattered(s: &Matrix, p: &Polytope, ellipsoid: Option<&Ellipsoid>, tol: f64) -> Result<ScatterReport> {
    let r = p.dim();
    if s.nrows() != r {
        return Err(Error::InvalidInput(format!("samples have {} rows, polytope dim is {r}", s.nrows())));
    }
    if r > MAX_SCATTER_DIM {
        return Err(Error::TooLarge { what: "scattering check dimension", limit: MAX_SCATTER_DIM, got: r });
    }
    if s.ncols() > MAX_SCATTER_POINTS {
        return Err(Error::TooLarge { what: "scattering check sample count", limit: MAX_SCATTER_POINTS, got: s.ncols() });
    }
    let owned;
    let e = match ellipsoid {
        Some(e) => e,
        None => {
            owned = mvie(p)?;
            &owned
        }
    };
    if e.dim() != r {
        return Err(Error::InvalidInput("ellipsoid dimension differs from polytope".into()));
    }

    let violating_points: Vec<Vec<f64>> = s
        .column_iter()
        .filter(|c| !p.contains(&c.into_owned(), tol))
        .map(|c| c.iter().copied().collect())
        .collect();

    let pts = dedup_columns(s, 1e-12);
    let scale = pts.amax().max(1.0);
    let ext = lp::extreme_point_indices(&pts, 1e-10 * scale)?;
    let hull_pts = pts.select_columns(ext.iter());
    let facets = match hull_facets(&hull_pts, &ConversionOptions::default()) {
        Ok(h) => h,
        Err(Error::Degenerate(_)) => {
            return Ok(ScatterReport {
                ss1_holds: false,
                ss2_holds: false,
                tangent_polar_points: vec![],
                violating_points,
                cutting_facets: vec![],
                hull_facet_count: 0,
                min_margin: f64::NEG_INFINITY,
            })
        }
        Err(err) => return Err(err),
    };

    let mut tangent: Vec<Vector> = Vec::new();
    let mut cutting_facets = Vec::new();
    let mut min_margin = f64::INFINITY;
    for j in 0..facets.len() {
        let a = facets.normal(j);
        let n = a.norm();
        let (a, b) = (a / n, facets.offset(j) / n);
        let slack = b - a.dot(e.g());
        let margin = slack - (e.c() * &a).norm();
        min_margin = min_margin.min(margin);
        if margin < -tol {
            cutting_facets.push(a.iter().copied().chain(std::iter::once(b)).collect());
        }
        if margin.abs() <= tol && slack > 0.0 {
            tangent.push(a / slack);
        }
    }
    let ss1_holds = violating_points.is_empty() && cutting_facets.is_empty();

    let polar_vertices = p.polar(e.g())?.vertices()?.vertices().clone();
    let tangent_m = dedup_columns(&crate::linalg::columns_to_matrix(r, &tangent), tol);
    let ss2_holds = tangent_m.ncols() > 0 && same_point_set(&tangent_m, &polar_vertices, tol * scale_of(&polar_vertices));

    Ok(ScatterReport {
        ss1_holds,
        ss2_holds,
        tangent_polar_points: tangent_m.column_iter().map(|c| c.iter().copied().collect()).collect(),
        violating_points,
        cutting_facets,
        hull_facet_count: facets.len(),
        min_margin,
    })
}

fn scale_of(m: &Matrix) -> f64 {
    m.amax().max(1.0)
}

/// Regular hexagon vertices `(cos k pi/3, sin k pi/3)`.
pub fn hexagon_vertices() -> Matrix {
    Matrix::from_fn(2, 6, |i, k| {
        let t = k as f64 * std::f64::consts::PI / 3.0;
        if i == 0 {
            t.cos()
        } else {
            t.sin()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::{pex_vertices, SpecialKind, VertexForm};
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn special_polytopes_identifiable() {
        let expected = |kind: SpecialKind, r: usize| -> usize {
            let fact: usize = (1..=r).product();
            match kind {
                SpecialKind::BInf | SpecialKind::B1 => fact << r,
                SpecialKind::BInfPlus | SpecialKind::B1Plus => fact,
            }
        };
        for r in 1..=3 {
            for kind in SpecialKind::ALL {
                let rep = check_identifiable(&Polytope::special(kind, r).unwrap()).unwrap();
                assert!(rep.identifiable, "{kind} r={r}");
                assert!(rep.witness.is_none());
                assert_eq!(rep.automorphism_count, expected(kind, r), "{kind} r={r}");
            }
        }
    }

    #[test]
    fn pex_identifiable() {
        let rep = check_identifiable_vertices(&pex_vertices()).unwrap();
        assert!(rep.identifiable);
        assert!(rep.automorphism_count >= 2);
    }

    #[test]
    fn hexagon_not_identifiable() {
        let v = hexagon_vertices();
        let rep = check_identifiable_vertices(&v).unwrap();
        assert!(!rep.identifiable);
        assert_eq!(rep.automorphism_count, 12);
        let w = rep.witness.unwrap();
        assert!(maps_onto(&w, &v, 1e-7));
        assert!(!is_signed_permutation(&w, 1e-7));
        let t = std::f64::consts::PI / 3.0;
        let rot = dmatrix![t.cos(), -t.sin(); t.sin(), t.cos()];
        assert!(maps_onto(&rot, &v, 1e-12));
    }

    #[test]
    fn identifiability_invariant_under_relabeling() {
        let v = pex_vertices();
        let perm = [3, 5, 0, 2, 4, 1];
        let shuffled = v.select_columns(perm.iter());
        let dp = dmatrix![0.0, -1.0, 0.0; 0.0, 0.0, 1.0; -1.0, 0.0, 0.0];
        let base = check_identifiable_vertices(&v).unwrap();
        for m in [shuffled.clone(), &dp * &shuffled] {
            let rep = check_identifiable_vertices(&m).unwrap();
            assert_eq!(rep.identifiable, base.identifiable);
            assert_eq!(rep.automorphism_count, base.automorphism_count);
        }
    }

    #[test]
    fn signed_permutation_test() {
        assert!(is_signed_permutation(&dmatrix![0.0, -1.0; 1.0, 0.0], 1e-9));
        assert!(!is_signed_permutation(&dmatrix![1.0, 1.0; 0.0, 1.0], 1e-9));
        assert!(!is_signed_permutation(&dmatrix![1.0, 0.0; 1.0, 0.0], 1e-9));
    }

    #[test]
    fn vertices_are_sufficiently_scattered() {
        for r in 2..=3 {
            for kind in SpecialKind::ALL {
                let p = Polytope::special(kind, r).unwrap();
                let s = p.cached_vertices().unwrap().vertices().clone();
                let rep = check_scattered(&s, &p, None, 1e-6).unwrap();
                assert!(rep.ss1_holds && rep.ss2_holds, "{kind} r={r}: {rep:?}");
            }
        }
        let pex = Polytope::from_vertices(VertexForm::new(pex_vertices()).unwrap());
        let rep = check_scattered(&pex_vertices(), &pex, None, 1e-6).unwrap();
        assert!(rep.ss1_holds && rep.ss2_holds, "{rep:?}");
    }

    #[test]
    fn interior_samples_fail_ss1() {
        let p = Polytope::special(SpecialKind::BInf, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = Matrix::from_fn(2, 50, |_, _| 0.0);
        let mut s = s;
        for mut c in s.column_iter_mut() {
            let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let rad: f64 = 0.95 * rng.random::<f64>().sqrt();
            c.copy_from(&dvector![rad * t.cos(), rad * t.sin()]);
        }
        let rep = check_scattered(&s, &p, None, 1e-6).unwrap();
        assert!(!rep.ss1_holds);
        assert!(rep.violating_points.is_empty());
        assert!(!rep.cutting_facets.is_empty());
    }

    #[test]
    fn degenerate_samples_fail() {
        let p = Polytope::special(SpecialKind::BInf, 2).unwrap();
        let s = dmatrix![0.0, 0.5, 1.0; 0.0, 0.5, 1.0];
        let rep = check_scattered(&s, &p, None, 1e-6).unwrap();
        assert!(!rep.ss1_holds && !rep.ss2_holds);
    }

    #[test]
    fn outside_points_reported() {
        let p = Polytope::special(SpecialKind::BInf, 2).unwrap();
        let s = dmatrix![1.5, -1.0, 1.0, -1.0; 1.0, 1.0, -1.0, -1.0];
        let rep = check_scattered(&s, &p, None, 1e-6).unwrap();
        assert!(!rep.ss1_holds);
        assert_eq!(rep.violating_points, vec![vec![1.5, 1.0]]);
    }
}
