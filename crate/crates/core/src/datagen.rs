//! Synthetic ground truth: sufficiently scattered latent samples, mixing
//! matrices and additive noise.
//!
//! Every generator is a pure function of its seed. Independent parts of one
//! realization draw from separate ChaCha8 streams of the same seed (see
//! [`substream`]).

use std::fs;
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::checks::check_identifiable;
use crate::error::{Error, Result};
use crate::io::{write_json, write_matrix, PolytopeDoc};
use crate::lp;
use crate::mvie::mvie;
use crate::polytope::{hull_facets, ConversionOptions, Polytope};
use crate::projection::Projector;
use crate::{Matrix, Vector};

/// Largest dimension accepted by the polar-domain generator.
pub const MAX_POLAR_DOMAIN_DIM: usize = 4;
/// Radius of the ball the random polar-domain points are drawn from, before
/// mapping through `C^-1`.
pub const POLAR_SAMPLE_RADIUS: f64 = 0.9;

const MIXING_STREAM: u64 = 1;
const SAMPLE_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;
const PAD_STREAM: u64 = 4;
const MAX_MIXING_ATTEMPTS: u64 = 64;

/// Stream `stream` of the ChaCha8 generator seeded with `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Polar vertices of the composite example polytope about its MVIE center
/// `(0, 0, 0.375)`, one per column.
pub fn pex_polar_vertices() -> Matrix {
    Matrix::from_row_slice(
        3,
        7,
        &[
            1.0, 1.0, -1.0, -1.0, 0.0, 0.0, 0.0, //
            1.0, -1.0, 1.0, -1.0, 1.6, -1.6, 0.0, //
            0.0, 0.0, 0.0, 0.0, 1.6, 1.6, -8.0 / 3.0,
        ],
    )
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn unit_ball_point(rng: &mut ChaCha8Rng, r: usize) -> Vector {
    loop {
        let d = Vector::from_fn(r, |_, _| gaussian(rng));
        let n = d.norm();
        if n > 1e-12 {
            let radius = rng.random::<f64>().powf(1.0 / r as f64);
            return d * (radius / n);
        }
    }
}

/// Polar-domain construction of a sufficiently scattered sample set.
///
/// The polar of `conv(S)` about the MVIE center `g` is built as the hull of
/// the polar vertices of `p` plus `L - f0` points drawn uniformly from
/// `0.9 C^-1 B2`; each facet `(a, b)` of that hull gives the sample
/// `a / b + g`. The number of returned columns is the facet count and varies
/// with the seed. With `L = f0` the output is the vertex set of `p`.
pub fn generate_polar_domain(p: &Polytope, l: usize, seed: u64) -> Result<Matrix> {
    let r = p.dim();
    if r > MAX_POLAR_DOMAIN_DIM {
        return Err(Error::TooLarge { what: "polar-domain dimension", limit: MAX_POLAR_DOMAIN_DIM, got: r });
    }
    if let Ok(rep) = check_identifiable(p) {
        if !rep.identifiable {
            warn!("polar-domain samples requested for a non-identifiable polytope");
        }
    }
    let e = mvie(p)?;
    let base = p.polar(e.g())?.vertices()?.vertices().clone();
    let f0 = base.ncols();
    if l < f0 {
        return Err(Error::InvalidInput(format!("L = {l} is below the {f0} polar vertices")));
    }
    let c_inv = e
        .c()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("MVIE shape matrix".into()))?;
    let mut rng = substream(seed, SAMPLE_STREAM);
    let mut k = Matrix::zeros(r, l);
    k.columns_mut(0, f0).copy_from(&base);
    for j in f0..l {
        let u = unit_ball_point(&mut rng, r) * POLAR_SAMPLE_RADIUS;
        k.set_column(j, &(&c_inv * u));
    }

    let ext = lp::extreme_point_indices(&k, 1e-10 * k.amax().max(1.0))?;
    let hull = hull_facets(&k.select_columns(ext.iter()), &ConversionOptions::default())?;
    let mut s = Matrix::zeros(r, hull.len());
    for i in 0..hull.len() {
        let b = hull.offset(i);
        if b <= 0.0 {
            return Err(Error::NotInterior);
        }
        s.set_column(i, &(hull.normal(i) / b + e.g()));
    }
    Ok(s)
}

/// Appends random convex combinations of the columns of `s` until there are
/// `n` columns. The convex hull, and hence scattering, is unchanged.
pub fn pad_with_interior(s: &Matrix, n: usize, seed: u64) -> Matrix {
    let (r, k) = s.shape();
    if k >= n || k == 0 {
        return s.clone();
    }
    let mut rng = substream(seed, PAD_STREAM);
    let mut out = Matrix::zeros(r, n);
    out.columns_mut(0, k).copy_from(s);
    for j in k..n {
        let w: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
        let total: f64 = w.iter().sum();
        let mut c = Vector::zeros(r);
        for (i, wi) in w.iter().enumerate() {
            c.axpy(wi / total, &s.column(i), 1.0);
        }
        out.set_column(j, &c);
    }
    out
}

/// Inflated-MVIE sampler: Gaussian draws with covariance `(rho^2 / r) I`,
/// saturated to norm `rho`, mapped by `u -> C u + g` and projected onto `p`.
pub fn generate_inflated_mvie(p: &Polytope, rho: f64, n: usize, seed: u64) -> Result<Matrix> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidInput(format!("inflation constant must be positive, got {rho}")));
    }
    let r = p.dim();
    let e = mvie(p)?;
    let projector = Projector::new(p)?;
    let sd = rho / (r as f64).sqrt();
    let mut rng = substream(seed, SAMPLE_STREAM);
    let mut z = Matrix::zeros(r, n);
    for j in 0..n {
        let mut w = Vector::from_fn(r, |_, _| sd * gaussian(&mut rng));
        let norm = w.norm();
        if norm > rho {
            w *= rho / norm;
        }
        z.set_column(j, &(e.c() * w + e.g()));
    }
    projector.project_columns(&mut z);
    Ok(z)
}

/// `M x r` matrix with i.i.d. standard normal entries, redrawn from a fresh
/// stream while its smallest singular value is below `1e-6`.
pub fn generate_mixing(m: usize, r: usize, seed: u64) -> Result<Matrix> {
    if m < r || r == 0 {
        return Err(Error::InvalidInput(format!("mixing needs M >= r >= 1 (got M={m}, r={r})")));
    }
    for attempt in 0..MAX_MIXING_ATTEMPTS {
        let mut rng = substream(seed, MIXING_STREAM + 16 * attempt);
        let h = Matrix::from_fn(m, r, |_, _| gaussian(&mut rng));
        let smin = h.singular_values().min();
        if smin >= 1e-6 {
            return Ok(h);
        }
    }
    Err(Error::Singular("could not draw a full-rank mixing matrix".into()))
}

/// Adds i.i.d. Gaussian noise with variance `mean(Y^2) / 10^(snr/10)`. An
/// infinite SNR returns the input unchanged.
pub fn add_noise(y: &Matrix, snr_db: f64, seed: u64) -> Matrix {
    if snr_db == f64::INFINITY || y.is_empty() {
        return y.clone();
    }
    let power = y.norm_squared() / y.len() as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = substream(seed, NOISE_STREAM);
    y + Matrix::from_fn(y.nrows(), y.ncols(), |_, _| sigma * gaussian(&mut rng))
}

/// Sparse samples in the unit l1 ball: each column has a support of size
/// drawn uniformly from `1..=max_support`, Gaussian values, and l1 norm 1
/// with probability 1/2 (uniform in `[0, 1)` otherwise). One-sparse columns
/// on the sphere are vertices `±e_i`.
pub fn generate_sparse_l1(r: usize, n: usize, max_support: usize, seed: u64) -> Result<Matrix> {
    if r == 0 || n == 0 || max_support == 0 || max_support > r {
        return Err(Error::InvalidInput(format!(
            "sparse samples need r, n >= 1 and 1 <= max_support <= r (got r={r}, n={n}, max_support={max_support})"
        )));
    }
    let mut rng = substream(seed, 2);
    let mut s = Matrix::zeros(r, n);
    let mut idx: Vec<usize> = (0..r).collect();
    for j in 0..n {
        let k = rng.random_range(1..=max_support);
        for i in 0..k {
            let pick = rng.random_range(i..r);
            idx.swap(i, pick);
        }
        let vals: Vec<f64> = (0..k).map(|_| gaussian(&mut rng)).collect();
        let norm: f64 = vals.iter().map(|v| v.abs()).sum();
        let radius = if rng.random_bool(0.5) { 1.0 } else { rng.random_range(0.0..1.0) };
        for (i, v) in vals.iter().enumerate() {
            s[(idx[i], j)] = radius * v / norm;
        }
    }
    Ok(s)
}

/// How latent samples are drawn for a realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleGenerator {
    /// Polar-domain construction with `l` points; the sample count is
    /// determined by the construction.
    PolarDomain { l: usize },
    /// Inflated MVIE with the given inflation constant.
    InflatedMvie { rho: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub h_g: Matrix,
    pub s_g: Matrix,
    pub y_clean: Matrix,
    pub y_noisy: Matrix,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

#[derive(Serialize)]
struct GroundTruthMeta {
    seed: u64,
    snr_db: Option<f64>,
    m: usize,
    r: usize,
    n: usize,
    generator: Option<SampleGenerator>,
    polytope: PolytopeDoc,
}

impl GroundTruth {
    /// Assembles `Y = H_g S_g` and its noisy copy (`snr_db = None` means no
    /// noise).
    pub fn assemble(h_g: Matrix, s_g: Matrix, snr_db: Option<f64>, seed: u64) -> Result<Self> {
        if h_g.ncols() != s_g.nrows() {
            return Err(Error::InvalidInput("H_g columns must equal S_g rows".into()));
        }
        let y_clean = &h_g * &s_g;
        let y_noisy = match snr_db {
            Some(snr) => add_noise(&y_clean, snr, seed),
            None => y_clean.clone(),
        };
        Ok(Self { h_g, s_g, y_clean, y_noisy, snr_db, seed })
    }

    /// Draws a full realization. `n` is ignored by the polar-domain
    /// generator.
    pub fn generate(
        p: &Polytope,
        generator: SampleGenerator,
        m: usize,
        n: usize,
        snr_db: Option<f64>,
        seed: u64,
    ) -> Result<Self> {
        let s_g = match generator {
            SampleGenerator::PolarDomain { l } => generate_polar_domain(p, l, seed)?,
            SampleGenerator::InflatedMvie { rho } => generate_inflated_mvie(p, rho, n, seed)?,
        };
        let h_g = generate_mixing(m, p.dim(), seed)?;
        Self::assemble(h_g, s_g, snr_db, seed)
    }

    /// Writes `Hg.csv`, `Sg.csv`, `Y.csv` (noisy) and `meta.json`.
    pub fn write_dir(&self, dir: &Path, p: &Polytope, generator: Option<SampleGenerator>) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_matrix(&dir.join("Hg.csv"), &self.h_g)?;
        write_matrix(&dir.join("Sg.csv"), &self.s_g)?;
        write_matrix(&dir.join("Y.csv"), &self.y_noisy)?;
        let meta = GroundTruthMeta {
            seed: self.seed,
            snr_db: self.snr_db,
            m: self.h_g.nrows(),
            r: self.h_g.ncols(),
            n: self.s_g.ncols(),
            generator,
            polytope: PolytopeDoc::from_polytope(p, None),
        };
        write_json(&dir.join("meta.json"), &meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checks::check_scattered;
    use crate::linalg::same_point_set;
    use crate::polytope::{pex_vertices, SpecialKind};

    #[test]
    fn sparse_samples_lie_in_l1_ball() {
        let s = generate_sparse_l1(8, 500, 3, 4).unwrap();
        for c in s.column_iter() {
            assert!(c.iter().map(|v| v.abs()).sum::<f64>() <= 1.0 + 1e-12);
            assert!(c.iter().filter(|v| **v != 0.0).count() <= 3);
        }
        let on_sphere = s.column_iter().filter(|c| (c.iter().map(|v| v.abs()).sum::<f64>() - 1.0).abs() < 1e-12).count();
        assert!(on_sphere > 150 && on_sphere < 350, "{on_sphere}");
        assert_eq!(s, generate_sparse_l1(8, 500, 3, 4).unwrap());
        assert!(generate_sparse_l1(3, 10, 4, 0).is_err());
    }

    #[test]
    fn pex_polar_matches_fixture() {
        let p = Polytope::pex();
        let e = mvie(&p).unwrap();
        let v = p.polar(e.g()).unwrap().vertices().unwrap().vertices().clone();
        assert!(same_point_set(&v, &pex_polar_vertices(), 1e-5));
    }

    #[test]
    fn polar_domain_without_extra_points_gives_vertices() {
        let p = Polytope::pex();
        let s = generate_polar_domain(&p, 7, 0).unwrap();
        assert!(same_point_set(&s, &pex_vertices(), 1e-6));
    }

    #[test]
    fn polar_domain_samples_are_scattered() {
        let p = Polytope::pex();
        for seed in 0..5 {
            let s = generate_polar_domain(&p, 30, seed).unwrap();
            for c in s.column_iter() {
                assert!(p.contains(&c.into_owned(), 1e-8));
            }
            let v = pex_vertices();
            let non_vertex = s
                .column_iter()
                .filter(|c| v.column_iter().all(|x| (x - c).amax() > 1e-6))
                .count();
            assert!(non_vertex >= s.ncols() - v.ncols() && non_vertex > 0, "seed {seed}");
            let rep = check_scattered(&s, &p, None, 1e-6).unwrap();
            assert!(rep.ss1_holds && rep.ss2_holds, "seed {seed}: {rep:?}");
        }
        let sq = Polytope::special(SpecialKind::BInf, 2).unwrap();
        let s = generate_polar_domain(&sq, 10, 3).unwrap();
        let rep = check_scattered(&s, &sq, None, 1e-6).unwrap();
        assert!(rep.ss1_holds && rep.ss2_holds);
        assert!(generate_polar_domain(&p, 5, 0).is_err());
    }

    #[test]
    fn inflated_samples() {
        let sq = Polytope::special(SpecialKind::BInf, 2).unwrap();
        let e = mvie(&sq).unwrap();
        let inner = generate_inflated_mvie(&sq, 1.0, 500, 1).unwrap();
        for c in inner.column_iter() {
            assert!((e.c().clone().try_inverse().unwrap() * (c - e.g())).norm() <= 1.0 + 1e-12);
        }

        let s = generate_inflated_mvie(&sq, 0.85 * 2f64.sqrt(), 2000, 2).unwrap();
        let on_face = s.column_iter().filter(|c| (c.amax() - 1.0).abs() < 1e-12).count();
        let at_vertex = s.column_iter().filter(|c| c.iter().all(|v| (v.abs() - 1.0).abs() < 1e-12)).count();
        assert!(s.amax() <= 1.0 + 1e-12);
        assert!(on_face > 0);
        assert_eq!(at_vertex, 0);

        let b1 = Polytope::special(SpecialKind::B1, 3).unwrap();
        let s = generate_inflated_mvie(&b1, 3f64.sqrt(), 10_000, 3).unwrap();
        let max_l1 = s.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        assert!(max_l1 <= 1.0 + 1e-9 && max_l1 > 1.0 - 1e-9, "{max_l1}");
        assert!(generate_inflated_mvie(&b1, 0.0, 10, 0).is_err());
    }

    #[test]
    fn mixing_is_full_rank() {
        for (m, r) in [(4, 3), (20, 10), (3, 3)] {
            let h = generate_mixing(m, r, 7).unwrap();
            assert_eq!(h.shape(), (m, r));
            assert!(h.singular_values().min() > 1e-6);
        }
        assert_eq!(generate_mixing(4, 3, 7).unwrap(), generate_mixing(4, 3, 7).unwrap());
        assert!(generate_mixing(2, 3, 0).is_err());
    }

    #[test]
    fn noise_levels() {
        let y = generate_mixing(50, 40, 11).unwrap();
        assert_eq!(add_noise(&y, f64::INFINITY, 0), y);
        let noisy = add_noise(&y, 0.0, 5);
        let ratio = (&noisy - &y).norm() / y.norm();
        assert!((ratio - 1.0).abs() < 0.1, "{ratio}");
        for snr in [10.0, 20.0, 30.0] {
            let n = add_noise(&y, snr, 9);
            let realized = 20.0 * (y.norm() / (&n - &y).norm()).log10();
            assert!((realized - snr).abs() < 0.5, "{snr} -> {realized}");
        }
    }

    #[test]
    fn ground_truth_directory() {
        let dir = tempfile::tempdir().unwrap();
        let p = Polytope::special(SpecialKind::BInfPlus, 3).unwrap();
        let g = SampleGenerator::InflatedMvie { rho: 1.5 };
        let gt = GroundTruth::generate(&p, g, 5, 40, Some(20.0), 4).unwrap();
        assert_eq!(gt.y_clean, &gt.h_g * &gt.s_g);
        assert_eq!(gt, GroundTruth::generate(&p, g, 5, 40, Some(20.0), 4).unwrap());
        gt.write_dir(dir.path(), &p, Some(g)).unwrap();
        let y = crate::io::read_matrix(&dir.path().join("Y.csv")).unwrap();
        assert!((y - &gt.y_noisy).amax() < 1e-12);
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("meta.json")).unwrap()).unwrap();
        assert_eq!(meta["seed"], 4);
        assert_eq!(meta["polytope"]["special"], "binfplus");
    }
}
