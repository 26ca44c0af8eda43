//! SIR against the inflation constant for B-infinity, using the sweep
//! harness. Writes results.csv and aggregate.csv to the given directory.
//!
//! `cargo run --release --example inflation_sweep -- [out_dir]`

use polyfact::experiment::{run_experiment, write_outcome, ExperimentConfig};

const CONFIG: &str = r#"
polytope = "binf"
dim = 5
m = 10
n = [200]
rho = [0.4, 0.5, 0.6, 0.7, 0.85]
rho_times_sqrt_r = true
realizations = 10

[generator]
kind = "inflated_mvie"

[solver]
preset = "robust"
"#;

fn main() -> polyfact::Result<()> {
    let cfg = ExperimentConfig::from_toml(CONFIG)?;
    let out = run_experiment(&cfg, None)?;
    println!("rho/sqrt(r)  mean SIR   std   converged");
    for a in &out.aggregates {
        println!("{:>10.2} {:>9.1} {:>6.1} {:>10.0}%", a.rho, a.mean_sir_db, a.std_sir_db, 100.0 * a.converged_fraction);
    }
    if let Some(dir) = std::env::args().nth(1) {
        write_outcome(dir.as_ref(), &cfg, &out)?;
        println!("wrote {dir}/results.csv");
    }
    Ok(())
}
