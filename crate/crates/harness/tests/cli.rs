use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn saddlemax(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_saddlemax")).args(args).output().expect("binary runs")
}

fn json_ok(args: &[&str]) -> Value {
    let out = saddlemax(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn close(v: &Value, want: f64, tol: f64) {
    let got = v.as_f64().unwrap();
    assert!((got - want).abs() <= tol, "{got} vs {want}");
}

#[test]
fn solve_poisson() {
    let v = json_ok(&["solve", "--model", "poisson", "--theta", "3", "--y", "5"]);
    close(&v["s_hat"][0], (5.0f64 / 3.0).ln(), 1e-12);
    close(&v["hessian"][0], 5.0, 1e-10);
}

#[test]
fn solve_reports_boundary() {
    let out = saddlemax(&["solve", "--model", "poisson", "--theta", "3", "--y", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no saddlepoint"));
}

#[test]
fn eval_each_kind() {
    let base = ["eval", "--model", "poisson", "--theta", "3", "--x", "5", "--n", "1"];
    let spa = json_ok(&[&base[..], &["--kind", "spa"]].concat());
    close(&spa["total"], -2.277786, 1e-6);
    let exact = json_ok(&[&base[..], &["--kind", "exact"]].concat());
    close(&exact["total"], -2.294430, 1e-6);
    let closed = json_ok(&[&base[..], &["--kind", "exact", "--exact-source", "closed-form"]].concat());
    close(&closed["total"], exact["total"].as_f64().unwrap(), 1e-10);
    let zeroth = json_ok(&[&base[..], &["--kind", "zeroth"]].concat());
    close(&zeroth["log_p"], 0.0, 0.0);
    let normal = json_ok(&[&base[..], &["--kind", "normal"]].concat());
    let want = -0.5 * 4.0 / 3.0 - 0.5 * (2.0 * std::f64::consts::PI * 3.0).ln();
    close(&normal["total"], want, 1e-12);
}

#[test]
fn fit_gamma_fi_zeroth() {
    let v = json_ok(&["fit", "--model", "gamma-fi", "--kind", "zeroth", "--x", "50", "--n", "20", "--box", "0.01:10"]);
    assert_eq!(v["converged"], Value::Bool(true));
    close(&v["theta_hat"][0], 2.5, 1e-9);
    // Observed information n/θ̂ gives the standard error.
    close(&v["std_errors"][0], (2.5f64 / 20.0).sqrt(), 1e-6);
}

#[test]
fn usage_errors() {
    for args in [
        &["solve", "--model", "nope", "--y", "1"][..],
        &["eval", "--model", "poisson", "--kind", "bogus", "--x", "1", "--n", "1"],
        &["fit", "--model", "poisson", "--kind", "spa", "--x", "1", "--n", "1", "--box", "0..1"],
        &["eval", "--model", "poisson", "--kind", "spa", "--x", "1", "--n", "-2"],
        &["eval", "--model", "gamma-fi", "--params", "t", "--kind", "spa", "--x", "1", "--n", "1"],
    ] {
        let out = saddlemax(args);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"), "{args:?}");
    }
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const CONVERGE: &str = r#"{"model": "gamma-fi", "experiment": "converge", "n_grid": [8, 16, 32, 64, 128, 256],
    "kinds": ["spa", "zeroth", "normal"], "theta0": [1.5], "xi": [1.0], "reference": "closed_form",
    "bounds": [[0.01, 20.0]]}"#;

#[test]
fn converge_experiment_writes_csv_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", CONVERGE);
    let csv = dir.path().join("out/c.csv");
    let out = saddlemax(&["experiment", "converge", "--config", &cfg, "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("n,"), "{header}");
    assert_eq!(lines.count(), 6);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/c.csv.meta.json")).unwrap()).unwrap();
    assert!(meta.get("slopes").is_some(), "{meta}");
}

#[test]
fn experiment_output_does_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.json",
        r#"{"model": "poisson", "experiment": "sample", "n_grid": [10, 40], "kinds": ["spa", "zeroth"],
            "theta0": [2.0], "replicates": 60, "seed": 9, "bounds": [[0.001, 50.0]]}"#,
    );
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let csv = dir.path().join(format!("s{threads}.csv"));
        let out = saddlemax(&["--threads", threads, "experiment", "sample", "--config", &cfg, "--out", csv.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(&csv).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);

    let csv = dir.path().join("seeded.csv");
    let out = saddlemax(&["--seed", "10", "experiment", "sample", "--config", &cfg, "--out", csv.to_str().unwrap()]);
    assert!(out.status.success());
    assert_ne!(std::fs::read(&csv).unwrap(), outputs[0]);
}

#[test]
fn experiment_kind_must_match_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", CONVERGE);
    let out = saddlemax(&["experiment", "sample", "--config", &cfg, "--out", dir.path().join("x.csv").to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn invalid_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for (i, text) in [
        r#"{"model": "poisson", "experiment": "converge", "n_grid": [], "kinds": ["spa"], "theta0": [1.0]}"#,
        r#"{"model": "poisson", "experiment": "converge", "n_grid": [8, 4], "kinds": ["spa"], "theta0": [1.0]}"#,
        r#"{"model": "poisson", "experiment": "converge", "n_grid": [8], "kinds": ["fast"], "theta0": [1.0]}"#,
        r#"{"model": "poisson", "experiment": "converge", "n_grid": [8], "kinds": ["spa"], "theta0": [1.0], "colour": 1}"#,
        r#"{"model": "poisson", "experiment": "sample", "n_grid": [8], "kinds": ["spa"], "theta0": [1.0], "replicates": 0}"#,
        r#"{"model": "poisson", "experiment": "converge", "n_grid": [8], "kinds": ["spa"]"#,
    ]
    .iter()
    .enumerate()
    {
        let cfg = write(dir.path(), &format!("bad{i}.json"), text);
        let kind = if text.contains("sample") { "sample" } else { "converge" };
        let out = saddlemax(&["experiment", kind, "--config", &cfg, "--out", dir.path().join("x.csv").to_str().unwrap()]);
        assert!(!out.status.success(), "config {i} accepted");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
}
