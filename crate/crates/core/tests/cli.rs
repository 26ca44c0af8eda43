use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use polyfact::experiment::read_records;
use polyfact::io::{read_matrix, write_polytope};
use polyfact::mvie::mvie_closed_form;
use polyfact::{Polytope, SpecialKind, VertexForm};

fn polyfact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyfact")).args(args).output().expect("spawn polyfact")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["generate", "--m", "4", "--seed", "3", "--out", p(dir)];
    args.extend_from_slice(extra);
    let out = polyfact(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn generate_then_factorize() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, &["--polytope", "binf", "--dim", "3", "--pad", "--n", "100"]);
    for f in ["Hg.csv", "Sg.csv", "Y.csv", "meta.json"] {
        assert!(data.join(f).exists(), "{f}");
    }
    assert_eq!(read_matrix(&data.join("Y.csv")).unwrap().shape(), (4, 100));

    let run = tmp.path().join("run");
    let out = polyfact(&[
        "factorize", "--input", p(&data.join("Y.csv")), "--polytope", "binf", "--rank", "3", "--robust",
        "--truth", p(&data.join("Sg.csv")), "--out", p(&run),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], true);
    assert!(summary["mean_sir_db"].as_f64().unwrap() >= 40.0);
    assert_eq!(read_matrix(&run.join("H.csv")).unwrap().shape(), (4, 3));
    assert_eq!(read_matrix(&run.join("S.csv")).unwrap().shape(), (3, 100));
    let trace = fs::read_to_string(run.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,objective"));
    assert_eq!(trace.lines().count() as u64, summary["iterations"].as_u64().unwrap() + 2);
}

#[test]
fn factorize_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, &["--polytope", "binf", "--dim", "3", "--generator", "inflated-mvie", "--rho", "1.5", "--n", "60"]);
    let y = data.join("Y.csv");
    let short = polyfact(&[
        "factorize", "--input", p(&y), "--polytope", "binf", "--rank", "3", "--max-iters", "5", "--out",
        p(&tmp.path().join("a")),
    ]);
    assert_eq!(code(&short), 2);
    let raw = polyfact(&[
        "factorize", "--input", p(&y), "--polytope", "binf", "--rank", "3", "--raw-paper-step", "--max-iters", "50",
        "--out", p(&tmp.path().join("b")),
    ]);
    assert!(matches!(code(&raw), 0 | 2), "{}", String::from_utf8_lossy(&raw.stderr));
    assert_eq!(json(&raw)["unscaled_step"], true);
    let missing = polyfact(&[
        "factorize", "--input", p(&tmp.path().join("nope.csv")), "--polytope", "binf", "--rank", "3", "--out",
        p(&tmp.path().join("c")),
    ]);
    assert_eq!(code(&missing), 1);
    assert!(!missing.stderr.is_empty());
    let bad_rank = polyfact(&[
        "factorize", "--input", p(&y), "--polytope", "binf", "--rank", "5", "--out", p(&tmp.path().join("d")),
    ]);
    assert_eq!(code(&bad_rank), 1);
}

#[test]
fn identifiability_certificates() {
    let tmp = tempfile::tempdir().unwrap();
    let pex = tmp.path().join("pex.json");
    write_polytope(&pex, &Polytope::pex(), None).unwrap();
    assert_eq!(code(&polyfact(&["check-identifiable", "--polytope", p(&pex)])), 0);

    let hex = tmp.path().join("hex.json");
    let hexagon = Polytope::from_vertices(VertexForm::new(polyfact::checks::hexagon_vertices()).unwrap());
    write_polytope(&hex, &hexagon, None).unwrap();
    let out = polyfact(&["check-identifiable", "--polytope", p(&hex)]);
    assert_eq!(code(&out), 3);
    let report = json(&out);
    assert_eq!(report["identifiable"], false);
    assert_eq!(report["witness"].as_array().unwrap().len(), 2);

    fs::write(tmp.path().join("broken.json"), "{ not json").unwrap();
    assert_eq!(code(&polyfact(&["check-identifiable", "--polytope", p(&tmp.path().join("broken.json"))])), 1);
}

#[test]
fn mvie_report() {
    let out = polyfact(&["mvie", "--polytope", "b1plus", "--dim", "3"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let e = mvie_closed_form(SpecialKind::B1Plus, 3);
    for i in 0..3 {
        assert!((v["g"][i].as_f64().unwrap() - e.g()[i]).abs() < 1e-12);
        for j in 0..3 {
            assert!((v["c"][i][j].as_f64().unwrap() - e.c()[(i, j)]).abs() < 1e-12);
        }
    }
    let solved = json(&polyfact(&["mvie", "--polytope", "b1plus", "--dim", "3", "--solve"]));
    assert!((solved["g"][0].as_f64().unwrap() - 0.25).abs() < 1e-6);
    assert_eq!(code(&polyfact(&["mvie", "--polytope", "b1plus"])), 1);
}

#[test]
fn scattering_certificates() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("good");
    generate(&good, &["--polytope", "pex"]);
    let out = polyfact(&["check-scattered", "--polytope", "pex", "--samples", p(&good.join("Sg.csv"))]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let inner = tmp.path().join("inner");
    generate(&inner, &["--polytope", "pex", "--generator", "inflated-mvie", "--rho", "0.9", "--n", "40"]);
    let out = polyfact(&["check-scattered", "--polytope", "pex", "--samples", p(&inner.join("Sg.csv"))]);
    assert_eq!(code(&out), 3);
    assert_eq!(json(&out)["ss1_holds"], false);
}

#[test]
fn experiment_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sweep.toml");
    fs::write(
        &cfg,
        r#"
polytope = "binf"
dim = 3
m = 4
n = [60, 120]
snr_db = [20.0, inf]
rho = [1.5]
realizations = 3

[generator]
kind = "inflated_mvie"

[solver]
preset = "robust"
max_iters = 2000
"#,
    )
    .unwrap();
    let run = |name: &str, threads: &str| {
        let dir = tmp.path().join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_polyfact"))
            .args(["experiment", p(&cfg), "--out", p(&dir)])
            .env("POLYFACT_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        dir
    };
    let a = run("a", "1");
    let b = run("b", "2");
    let ra = read_records(&a.join("results.csv")).unwrap();
    let rb = read_records(&b.join("results.csv")).unwrap();
    assert_eq!(ra.len(), 12);
    for (x, y) in ra.iter().zip(&rb) {
        let mut y = y.clone();
        y.wall_ms = x.wall_ms;
        assert_eq!(*x, y);
    }
    let agg = fs::read_to_string(a.join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 5);
    assert!(agg.lines().next().unwrap().contains("std_sir_db"));

    let out = polyfact(&["experiment", p(&cfg), "--out", p(&tmp.path().join("c")), "--realizations", "0"]);
    assert_eq!(code(&out), 1);
}
