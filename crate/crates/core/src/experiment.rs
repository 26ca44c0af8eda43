//! Sweep harness: generate ground truth, factorize, score, write CSV.
//!
//! A configuration is a TOML file:
//!
//! ```toml
//! polytope = "pex"            # special name, "pex", a JSON path, or an inline table
//! dim = 3                     # needed for special names
//! m = 4
//! n = [100]                   # ignored by the polar-domain generator unless pad = true
//! snr_db = [inf, 30.0, 20.0, 10.0]
//! rho = [0.0]                 # only used by the inflated-MVIE generator
//! rho_times_sqrt_r = false    # multiply every rho by sqrt(dim)
//! realizations = 20
//! base_seed = 0
//!
//! [generator]
//! kind = "polar_domain"       # or "inflated_mvie"
//! l = 30
//! pad = false
//!
//! [solver]
//! preset = "literal"          # or "robust"
//! lambda = 0.01               # optional overrides of the preset
//! restarts = 1
//!
//! [[solver.lambda_override]]
//! n = 500
//! lambda = 0.1
//! ```
//!
//! Every (cell, realization) pair uses the seed `base_seed + realization`,
//! independent of the cell, so cells share their random draws. Rows are
//! written in cell-major order regardless of scheduling.

use std::fs;
use std::path::Path;
use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{generate_inflated_mvie, generate_polar_domain, pad_with_interior, GroundTruth};
use crate::error::{Error, Result};
use crate::factorizer::{
    detmax_objective, factorize, Continuation, FactorizationProblem, Init, Momentum, DEFAULT_MAX_ITERS,
};
use crate::io::{resolve_polytope, PolytopeDoc};
use crate::metrics::sir;
use crate::polytope::Polytope;

pub const MAX_CELLS: usize = 10_000;
/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "POLYFACT_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolytopeSource {
    Named(String),
    Inline(PolytopeDoc),
}

impl PolytopeSource {
    pub fn resolve(&self, dim: Option<usize>) -> Result<Polytope> {
        match self {
            PolytopeSource::Named(s) => Ok(resolve_polytope(s, dim)?.0),
            PolytopeSource::Inline(doc) => doc.to_polytope(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorConfig {
    PolarDomain {
        l: usize,
        /// Pad the samples to `n` with interior convex combinations.
        #[serde(default)]
        pad: bool,
    },
    InflatedMvie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// The algorithm as listed: random init, printed momentum, fixed lambda.
    #[default]
    Literal,
    /// [`FactorizationProblem::robust`].
    Robust,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaOverride {
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub rho: Option<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub preset: Preset,
    pub lambda: Option<f64>,
    pub tau: Option<f64>,
    pub step_scale: Option<f64>,
    pub max_iters: Option<usize>,
    pub rel_tol: Option<f64>,
    pub restarts: Option<usize>,
    pub momentum: Option<Momentum>,
    pub whiten: Option<bool>,
    /// Continuation start weight; `0` disables continuation.
    pub lambda_start: Option<f64>,
    #[serde(default)]
    pub lambda_override: Vec<LambdaOverride>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub polytope: PolytopeSource,
    #[serde(default)]
    pub dim: Option<usize>,
    pub m: usize,
    #[serde(default = "default_n")]
    pub n: Vec<usize>,
    #[serde(default = "default_snr")]
    pub snr_db: Vec<f64>,
    #[serde(default = "default_rho")]
    pub rho: Vec<f64>,
    #[serde(default)]
    pub rho_times_sqrt_r: bool,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub base_seed: u64,
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn default_n() -> Vec<usize> {
    vec![100]
}
fn default_snr() -> Vec<f64> {
    vec![f64::INFINITY]
}
fn default_rho() -> Vec<f64> {
    vec![0.0]
}
fn default_realizations() -> usize {
    1
}

/// One sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub snr_db: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub snr_db: f64,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
    pub mean_sir_db: f64,
    pub detmax_objective: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    #[serde(rename = "N")]
    pub n: usize,
    pub snr_db: f64,
    pub rho: f64,
    pub runs: usize,
    pub failures: usize,
    pub mean_sir_db: f64,
    pub std_sir_db: f64,
    pub converged_fraction: f64,
    pub mean_iterations: f64,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::Config("realizations must be at least 1".into()));
        }
        if self.n.is_empty() || self.snr_db.is_empty() || self.rho.is_empty() {
            return Err(Error::Config("sweep lists must be nonempty".into()));
        }
        let cells = self.n.len() * self.snr_db.len() * self.rho.len();
        if cells > MAX_CELLS {
            return Err(Error::TooLarge { what: "sweep cells", limit: MAX_CELLS, got: cells });
        }
        if self.snr_db.iter().any(|s| s.is_nan()) || self.rho.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Config("snr_db must not be NaN and rho must be finite and >= 0".into()));
        }
        if let GeneratorConfig::InflatedMvie = self.generator {
            if self.rho.iter().any(|&r| r <= 0.0) {
                return Err(Error::Config("the inflated-MVIE generator needs rho > 0".into()));
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &snr_db in &self.snr_db {
                for &rho in &self.rho {
                    out.push(Cell { n, snr_db, rho });
                }
            }
        }
        out
    }

    pub fn seed_for(&self, realization: usize) -> u64 {
        self.base_seed.wrapping_add(realization as u64)
    }

    fn lambda_for(&self, cell: &Cell) -> Option<f64> {
        self.solver
            .lambda_override
            .iter()
            .find(|o| {
                o.n.is_none_or(|n| n == cell.n)
                    && o.snr_db.is_none_or(|s| s == cell.snr_db)
                    && o.rho.is_none_or(|r| r == cell.rho)
            })
            .map(|o| o.lambda)
            .or(self.solver.lambda)
    }

    /// Solver problem for one realization.
    pub fn problem(&self, y: crate::Matrix, p: Polytope, cell: &Cell, seed: u64) -> FactorizationProblem {
        let s = &self.solver;
        let mut prob = match s.preset {
            Preset::Literal => FactorizationProblem::new(y, p).init(Init::Random(seed)),
            Preset::Robust => FactorizationProblem::robust(y, p, seed),
        };
        if let Some(l) = self.lambda_for(cell) {
            prob = prob.lambda(l);
        }
        if let Some(v) = s.tau {
            prob = prob.tau(v);
        }
        if let Some(v) = s.step_scale {
            prob = prob.step_scale(v);
        }
        prob = prob.max_iters(s.max_iters.unwrap_or(DEFAULT_MAX_ITERS));
        if let Some(v) = s.rel_tol {
            prob = prob.rel_tol(v);
        }
        if let Some(v) = s.restarts {
            prob = prob.restarts(v);
        }
        if let Some(v) = s.momentum {
            prob = prob.momentum(v);
        }
        if let Some(v) = s.whiten {
            prob = prob.whiten(v);
        }
        match s.lambda_start {
            Some(v) if v > 0.0 => {
                let factor = prob.continuation.map_or(10.0, |c| c.factor);
                prob = prob.continuation(Some(Continuation { start: v, factor }));
            }
            Some(_) => prob = prob.continuation(None),
            None => {}
        }
        prob
    }
}

/// Draws the ground truth of one realization in one cell.
pub fn ground_truth(cfg: &ExperimentConfig, p: &Polytope, cell: &Cell, seed: u64) -> Result<GroundTruth> {
    let r = p.dim();
    let s_g = match cfg.generator {
        GeneratorConfig::PolarDomain { l, pad } => {
            let s = generate_polar_domain(p, l, seed)?;
            if pad {
                pad_with_interior(&s, cell.n, seed)
            } else {
                s
            }
        }
        GeneratorConfig::InflatedMvie => {
            let rho = if cfg.rho_times_sqrt_r { cell.rho * (r as f64).sqrt() } else { cell.rho };
            generate_inflated_mvie(p, rho, cell.n, seed)?
        }
    };
    let h_g = crate::datagen::generate_mixing(cfg.m, r, seed)?;
    let snr = if cell.snr_db == f64::INFINITY { None } else { Some(cell.snr_db) };
    GroundTruth::assemble(h_g, s_g, snr, seed)
}

/// Runs one realization; solver or generator failures give a record with a
/// NaN score.
pub fn run_realization(cfg: &ExperimentConfig, p: &Polytope, cell: &Cell, seed: u64) -> ExperimentRecord {
    let start = Instant::now();
    let attempt = || -> Result<(usize, bool, f64, f64, usize)> {
        let gt = ground_truth(cfg, p, cell, seed)?;
        let prob = cfg.problem(gt.y_noisy.clone(), p.clone(), cell, seed);
        let res = factorize(&prob)?;
        let score = sir(&res.s, &gt.s_g)?;
        Ok((res.iterations, res.converged, score.mean_db, detmax_objective(&res.s), gt.s_g.ncols()))
    };
    let (iterations, converged, mean_sir_db, detmax, n) = match attempt() {
        Ok(v) => v,
        Err(e) => {
            warn!("cell {cell:?}, seed {seed}: {e}");
            (0, false, f64::NAN, f64::NAN, cell.n)
        }
    };
    ExperimentRecord {
        seed,
        n,
        snr_db: cell.snr_db,
        rho: cell.rho,
        iterations,
        converged,
        mean_sir_db,
        detmax_objective: detmax,
        wall_ms: start.elapsed().as_millis() as u64,
    }
}

pub struct ExperimentOutcome {
    pub records: Vec<ExperimentRecord>,
    pub aggregates: Vec<CellAggregate>,
}

fn thread_count(requested: Option<usize>) -> usize {
    let env = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok());
    let avail = std::thread::available_parallelism().map_or(1, |n| n.get());
    match (requested, env) {
        (Some(r), Some(e)) => r.min(e),
        (Some(r), None) => r,
        (None, Some(e)) => e,
        (None, None) => avail,
    }
    .max(1)
}

/// Runs every (cell, realization) on a worker pool of at most `threads`
/// workers (further capped by `POLYFACT_THREADS`).
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let p = cfg.polytope.resolve(cfg.dim)?;
    let cells = cfg.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.realizations).map(move |k| (c, k)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(threads))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records: Vec<ExperimentRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, k)| run_realization(cfg, &p, &cells[c], cfg.seed_for(k)))
            .collect()
    });
    let aggregates = cells
        .iter()
        .enumerate()
        .map(|(c, cell)| aggregate(cell, &records[c * cfg.realizations..(c + 1) * cfg.realizations]))
        .collect();
    Ok(ExperimentOutcome { records, aggregates })
}

/// Mean and sample standard deviation of the finite scores of one cell.
pub fn aggregate(cell: &Cell, rows: &[ExperimentRecord]) -> CellAggregate {
    let scores: Vec<f64> = rows.iter().map(|r| r.mean_sir_db).filter(|v| v.is_finite()).collect();
    let k = scores.len();
    let mean = if k == 0 { f64::NAN } else { scores.iter().sum::<f64>() / k as f64 };
    let std = if k < 2 {
        0.0
    } else {
        (scores.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
    };
    let runs = rows.len();
    CellAggregate {
        n: cell.n,
        snr_db: cell.snr_db,
        rho: cell.rho,
        runs,
        failures: runs - k,
        mean_sir_db: mean,
        std_sir_db: std,
        converged_fraction: rows.iter().filter(|r| r.converged).count() as f64 / runs.max(1) as f64,
        mean_iterations: rows.iter().map(|r| r.iterations as f64).sum::<f64>() / runs.max(1) as f64,
    }
}

pub fn write_records(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let mut rd = csv::Reader::from_path(path)?;
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_aggregates(path: &Path, rows: &[CellAggregate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `results.csv`, `aggregate.csv` and the resolved `config.toml`.
pub fn write_outcome(dir: &Path, cfg: &ExperimentConfig, out: &ExperimentOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_records(&dir.join("results.csv"), &out.records)?;
    write_aggregates(&dir.join("aggregate.csv"), &out.aggregates)?;
    let text = toml::to_string_pretty(cfg).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(dir.join("config.toml"), text)?;
    Ok(())
}
