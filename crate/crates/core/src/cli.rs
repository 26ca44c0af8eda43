//! Command-line front end shared by the `polyfact` binary and the tests.
//!
//! Exit codes: 0 success (converged / certificate holds), 1 error,
//! 2 factorization hit the iteration limit, 3 certificate fails.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::checks::{check_identifiable, check_scattered, DEFAULT_SCATTER_TOL, IdentifiabilityReport, ScatterReport};
use crate::datagen::{pad_with_interior, generate_inflated_mvie, generate_polar_domain, GroundTruth, SampleGenerator};
use crate::error::{Error, Result};
use crate::experiment::{run_experiment, write_outcome, ExperimentConfig};
use crate::factorizer::{
    detmax_objective, factorize, FactorizationProblem, FactorizationResult, Init, Momentum, DEFAULT_LAMBDA,
    DEFAULT_MAX_ITERS, DEFAULT_REL_TOL, DEFAULT_STEP_SCALE, DEFAULT_TAU,
};
use crate::io::{read_matrix, resolve_polytope, write_json, write_matrix};
use crate::metrics::sir;
use crate::mvie::{mvie, mvie_solve, verify_john, Ellipsoid, JohnReport, DEFAULT_TOL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_CERTIFICATE_FAILS: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "polyfact", version, about = "Polytopic matrix factorization and polytope certificates")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Factorize a data matrix Y = H S with S constrained to a polytope.
    Factorize(FactorizeArgs),
    /// Run a parameter sweep described by a TOML file.
    Experiment(ExperimentArgs),
    /// Write a synthetic ground-truth realization.
    Generate(GenerateArgs),
    /// Maximum-volume inscribed ellipsoid of a polytope.
    Mvie(MvieArgs),
    /// Decide whether a polytope is identifiable.
    CheckIdentifiable(PolytopeArgs),
    /// Test the sufficient-scattering conditions for a sample matrix.
    CheckScattered(ScatterArgs),
}

#[derive(Debug, Args)]
pub struct PolytopeArgs {
    /// `binf`, `b1`, `binfplus`, `b1plus`, `pex`, `hexagon`, or a JSON file.
    #[arg(long)]
    pub polytope: String,
    /// Dimension for the special polytopes.
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MomentumArg {
    Printed,
    Fista,
}

#[derive(Debug, Args)]
pub struct FactorizeArgs {
    /// Data matrix (.csv or .f64).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub polytope: String,
    /// Factorization rank; also the dimension of a special polytope.
    #[arg(long, alias = "dim")]
    pub rank: Option<usize>,
    /// Penalty weight; defaults to 0.01, or 1e-5 times the column count with `--robust`.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, default_value_t = DEFAULT_STEP_SCALE)]
    pub step_scale: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long, default_value_t = DEFAULT_REL_TOL)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the unscaled S-step, without the 1/L factor.
    #[arg(long = "raw-paper-step", alias = "unscaled-step")]
    pub unscaled_step: bool,
    /// Whitening, spectral start, FISTA momentum and penalty continuation.
    #[arg(long)]
    pub robust: bool,
    #[arg(long)]
    pub momentum: Option<MomentumArg>,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    /// Optional reference sources; adds an SIR score to the summary.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML configuration.
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub realizations: Option<usize>,
    #[arg(long)]
    pub base_seed: Option<u64>,
    /// Overrides the solver weight for every cell without an explicit override.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Worker count (also capped by POLYFACT_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GeneratorArg {
    PolarDomain,
    InflatedMvie,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub polytope: PolytopeArgs,
    /// Number of mixtures.
    #[arg(long)]
    pub m: usize,
    /// Sample count (inflated MVIE, or padding target for the polar domain).
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = GeneratorArg::PolarDomain)]
    pub generator: GeneratorArg,
    /// Polar-domain point count.
    #[arg(long, default_value_t = 30)]
    pub l: usize,
    /// Pad polar-domain samples to `--n` columns with interior points.
    #[arg(long)]
    pub pad: bool,
    /// Inflation constant for the inflated-MVIE generator.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Omit for noiseless data.
    #[arg(long)]
    pub snr_db: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MvieArgs {
    #[command(flatten)]
    pub polytope: PolytopeArgs,
    /// Always run the barrier solver, even where a closed form exists.
    #[arg(long)]
    pub solve: bool,
    /// Tolerance of the John-condition check.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct ScatterArgs {
    #[command(flatten)]
    pub polytope: PolytopeArgs,
    /// Sample matrix, one column per sample.
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SCATTER_TOL)]
    pub tol: f64,
}

/// Parses `args` (including the program name); on failure returns the exit
/// code after printing the usage message.
pub fn parse_from<I, T>(args: I) -> std::result::Result<Cli, i32>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(args).map_err(|e| {
        let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        let _ = e.print();
        code
    })
}

/// Runs an already parsed command line and maps errors to exit code 1.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> i32 {
    match run(cli, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

/// Parse and run; returns the process exit code.
pub fn run_from<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match parse_from(args) {
        Ok(cli) => execute(&cli, out),
        Err(code) => code,
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Factorize(a) => cmd_factorize(a, out),
        Command::Experiment(a) => cmd_experiment(a, out),
        Command::Generate(a) => cmd_generate(a, out),
        Command::Mvie(a) => cmd_mvie(a, out),
        Command::CheckIdentifiable(a) => cmd_check_identifiable(a, out),
        Command::CheckScattered(a) => cmd_check_scattered(a, out),
    }
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct FactorizeSummary {
    iterations: usize,
    converged: bool,
    objective: f64,
    detmax_objective: f64,
    final_lambda: f64,
    lambda: f64,
    tau: f64,
    step_scale: f64,
    max_iters: usize,
    rel_tol: f64,
    restarts: usize,
    robust: bool,
    unscaled_step: bool,
    seed: u64,
    mean_sir_db: Option<f64>,
    wall_ms: u64,
}

pub fn cmd_factorize(a: &FactorizeArgs, out: &mut dyn Write) -> Result<i32> {
    let y = read_matrix(&a.input)?;
    let (p, _) = resolve_polytope(&a.polytope, a.rank)?;
    let mut prob = if a.robust {
        let prob = FactorizationProblem::robust(y, p, a.seed);
        match a.lambda {
            Some(l) => prob.lambda(l),
            None => prob,
        }
    } else {
        FactorizationProblem::new(y, p).lambda(a.lambda.unwrap_or(DEFAULT_LAMBDA)).init(Init::Random(a.seed))
    };
    prob = prob
        .tau(a.tau)
        .step_scale(a.step_scale)
        .max_iters(a.max_iters)
        .rel_tol(a.rel_tol)
        .unscaled_step(a.unscaled_step)
        .restarts(a.restarts);
    if let Some(m) = a.momentum {
        prob = prob.momentum(match m {
            MomentumArg::Printed => Momentum::Printed,
            MomentumArg::Fista => Momentum::Fista,
        });
    }
    let start = Instant::now();
    let res = factorize(&prob)?;
    let wall_ms = start.elapsed().as_millis() as u64;
    let mean_sir_db = match &a.truth {
        Some(path) => Some(sir(&res.s, &read_matrix(path)?)?.mean_db),
        None => None,
    };
    write_factorization(&a.out, &res)?;
    let summary = FactorizeSummary {
        iterations: res.iterations,
        converged: res.converged,
        objective: res.final_objective(),
        detmax_objective: detmax_objective(&res.s),
        final_lambda: res.final_lambda,
        lambda: prob.lambda,
        tau: prob.tau,
        step_scale: prob.step_scale,
        max_iters: prob.max_iters,
        rel_tol: prob.rel_tol,
        restarts: prob.restarts,
        robust: a.robust,
        unscaled_step: a.unscaled_step,
        seed: a.seed,
        mean_sir_db,
        wall_ms,
    };
    write_json(&a.out.join("summary.json"), &summary)?;
    print_json(out, &summary)?;
    Ok(if res.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

/// Writes `H.csv`, `S.csv` and `trace.csv` (iteration, objective).
pub fn write_factorization(dir: &Path, res: &FactorizationResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_matrix(&dir.join("H.csv"), &res.h)?;
    write_matrix(&dir.join("S.csv"), &res.s)?;
    let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
    w.write_record(["iteration", "objective"])?;
    for (t, v) in res.objective_trace.iter().enumerate() {
        w.write_record([t.to_string(), format!("{v:e}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_experiment(a: &ExperimentArgs, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(v) = a.realizations {
        cfg.realizations = v;
    }
    if let Some(v) = a.base_seed {
        cfg.base_seed = v;
    }
    if let Some(v) = a.lambda {
        cfg.solver.lambda = Some(v);
    }
    if let Some(v) = a.max_iters {
        cfg.solver.max_iters = Some(v);
    }
    let outcome = run_experiment(&cfg, a.threads)?;
    write_outcome(&a.out, &cfg, &outcome)?;
    for c in &outcome.aggregates {
        writeln!(
            out,
            "N={} snr_db={} rho={}: mean SIR {:.2} dB (std {:.2}, {} runs, {} failed)",
            c.n, c.snr_db, c.rho, c.mean_sir_db, c.std_sir_db, c.runs, c.failures
        )?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_generate(a: &GenerateArgs, out: &mut dyn Write) -> Result<i32> {
    let (p, _) = resolve_polytope(&a.polytope.polytope, a.polytope.dim)?;
    let (generator, s_g) = match a.generator {
        GeneratorArg::PolarDomain => {
            let s = generate_polar_domain(&p, a.l, a.seed)?;
            let s = if a.pad { pad_with_interior(&s, a.n, a.seed) } else { s };
            (SampleGenerator::PolarDomain { l: a.l }, s)
        }
        GeneratorArg::InflatedMvie => {
            let rho = a.rho.ok_or_else(|| Error::InvalidInput("--rho is required for inflated-mvie".into()))?;
            (SampleGenerator::InflatedMvie { rho }, generate_inflated_mvie(&p, rho, a.n, a.seed)?)
        }
    };
    let h_g = crate::datagen::generate_mixing(a.m, p.dim(), a.seed)?;
    let gt = GroundTruth::assemble(h_g, s_g, a.snr_db, a.seed)?;
    gt.write_dir(&a.out, &p, Some(generator))?;
    writeln!(out, "wrote {}x{} mixtures of {} sources to {}", gt.y_noisy.nrows(), gt.y_noisy.ncols(), p.dim(), a.out.display())?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct MvieReport {
    #[serde(flatten)]
    ellipsoid: Ellipsoid,
    log_det: f64,
    john: JohnReport,
}

pub fn cmd_mvie(a: &MvieArgs, out: &mut dyn Write) -> Result<i32> {
    let (p, _) = resolve_polytope(&a.polytope.polytope, a.polytope.dim)?;
    let h = p.halfspaces()?;
    let e = if a.solve { mvie_solve(&h, DEFAULT_TOL)? } else { mvie(&p)? };
    let john = verify_john(&e, &h, a.tol)?;
    let holds = john.is_plausible_mvie;
    let log_det = e.log_det();
    print_json(out, &MvieReport { ellipsoid: e, log_det, john })?;
    Ok(if holds { EXIT_OK } else { EXIT_CERTIFICATE_FAILS })
}

pub fn cmd_check_identifiable(a: &PolytopeArgs, out: &mut dyn Write) -> Result<i32> {
    let (p, _) = resolve_polytope(&a.polytope, a.dim)?;
    let report: IdentifiabilityReport = check_identifiable(&p)?;
    print_json(out, &report)?;
    Ok(if report.identifiable { EXIT_OK } else { EXIT_CERTIFICATE_FAILS })
}

pub fn cmd_check_scattered(a: &ScatterArgs, out: &mut dyn Write) -> Result<i32> {
    let (p, e) = resolve_polytope(&a.polytope.polytope, a.polytope.dim)?;
    let s = read_matrix(&a.samples)?;
    let report: ScatterReport = check_scattered(&s, &p, e.as_ref(), a.tol)?;
    print_json(out, &report)?;
    Ok(if report.ss1_holds && report.ss2_holds { EXIT_OK } else { EXIT_CERTIFICATE_FAILS })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String) {
        let mut buf = Vec::new();
        let code = run_from(std::iter::once("polyfact").chain(args.iter().copied()), &mut buf);
        (code, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn mvie_b1plus_prints_center() {
        let (code, text) = run_args(&["mvie", "--polytope", "b1plus", "--dim", "3"]);
        assert_eq!(code, EXIT_OK);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for x in v["g"].as_array().unwrap() {
            assert!((x.as_f64().unwrap() - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn identifiability_exit_codes() {
        assert_eq!(run_args(&["check-identifiable", "--polytope", "pex"]).0, EXIT_OK);
        let (code, text) = run_args(&["check-identifiable", "--polytope", "hexagon"]);
        assert_eq!(code, EXIT_CERTIFICATE_FAILS);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v["witness"].is_array());
        assert_eq!(run_args(&["check-identifiable", "--polytope", "nonsense"]).0, EXIT_ERROR);
        assert_eq!(run_args(&["check-identifiable"]).0, EXIT_ERROR);
    }

    #[test]
    fn factorize_missing_input_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o");
        let (code, _) = run_args(&[
            "factorize", "--input", "/nonexistent/Y.csv", "--polytope", "binf", "--rank", "3", "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_ERROR);
    }
}
