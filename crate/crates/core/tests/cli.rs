use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dynrecon::markov::SparseMatrix;
use dynrecon::output::{sha256_hex, RunManifest};

const SMALL_TORUS: &str = r#"{
  "version": 1,
  "system": {"kind": "torus-rotation"},
  "training": 2000,
  "ensemble": 20,
  "stride": 10,
  "n_max": 100,
  "lyapunov": {"steps": 2000, "gap_steps": 1500},
  "markov": {"steps": 50000, "simulate": 10000},
  "checks": {"unitarity_steps": 20000}
}"#;

fn run(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dynrecon"));
    cmd.args(args);
    if let Some(text) = config {
        let path = dir.join("config.json");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn manifest(out: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn assert_checksums(out: &Path) {
    let m = manifest(out);
    assert!(!m.outputs.is_empty());
    for e in &m.outputs {
        let bytes = fs::read(out.join(&e.file)).unwrap();
        assert_eq!(sha256_hex(&bytes), e.sha256, "{}", e.file);
        assert_eq!(bytes.len(), e.bytes);
    }
}

#[test]
fn forecast_writes_curves_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f");
    let o = run(&["forecast", "--out", out.to_str().unwrap()], Some(SMALL_TORUS), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("error_curves.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("horizon,error_direct,error_iter,autocorr,bound"));
    assert_eq!(lines.count(), 101);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("forecast_summary.json")).unwrap()).unwrap();
    assert!(summary["direct_max"].as_f64().unwrap() <= 1e-5);
    assert_checksums(&out);
    assert_eq!(manifest(&out).command, "forecast");
}

#[test]
fn identical_configs_give_identical_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut tables = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = run(
            &["markov", "--quiet", "--seed", "4", "--out", out.to_str().unwrap()],
            Some(SMALL_TORUS),
            dir.path(),
        );
        assert!(o.status.success());
        assert!(o.stdout.is_empty());
        tables.push(
            ["transition_matrix.coo", "stationary.csv", "law.csv", "markov_summary.json"]
                .map(|f| fs::read(out.join(f)).unwrap()),
        );
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn markov_matrix_file_parses() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    let o = run(&["markov", "--out", out.to_str().unwrap()], Some(SMALL_TORUS), dir.path());
    assert!(o.status.success());
    let p = SparseMatrix::from_coo(&fs::read_to_string(out.join("transition_matrix.coo")).unwrap()).unwrap();
    assert_eq!(p.size, 20);
    assert!(p.column_sums().iter().all(|s| (s - 1.0).abs() <= 1e-12));
    assert!(fs::read_to_string(out.join("stationary.csv")).unwrap().starts_with("cell,stationary,occupation\n"));
    assert_checksums(&out);
}

#[test]
fn lyapunov_trace_has_one_column_per_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("l");
    let o = run(&["lyapunov", "--out", out.to_str().unwrap()], Some(SMALL_TORUS), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("lyapunov.csv")).unwrap();
    assert!(table.starts_with("step,lambda1_running,lambda2_running\n"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("lyapunov_summary.json")).unwrap()).unwrap();
    for l in summary["estimate"]["per_step"].as_array().unwrap() {
        assert!(l.as_f64().unwrap().abs() <= 1e-6);
    }
    assert_checksums(&out);
}

#[test]
fn checks_pass_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let o = run(&["checks", "--out", out.to_str().unwrap()], Some(SMALL_TORUS), dir.path());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));
    assert!(stdout.contains("echo state (l63)"));
}

#[test]
fn failed_checks_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let config = SMALL_TORUS.replace(r#""unitarity_steps": 20000"#, r#""unitarity_steps": 20000, "cocycle_tol": 0.0"#);
    let o = run(&["checks", "--out", out.to_str().unwrap()], Some(&config), dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL cocycle law"));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn zero_resolution_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["markov"], Some(r#"{"markov": {"resolution": [0, 4]}}"#), dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("markov.resolution"));
}

#[test]
fn malformed_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["forecast"], Some("{\n  \"n_max\": 10,\n  oops\n}"), dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn singular_fit_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let config = r#"{"training": 2000, "ensemble": 5, "stride": 10, "n_max": 50, "ridge": 0.0,
        "hypothesis": {"kind": "gaussian", "centers": 400, "bandwidth_scale": 20.0, "affine": true}}"#;
    let o = run(&["forecast", "--out", out.to_str().unwrap()], Some(config), dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_subcommand_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["plot"], None, dir.path());
    assert!(!o.status.success());
}
