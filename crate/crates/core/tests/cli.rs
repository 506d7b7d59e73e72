use std::path::Path;
use std::process::{Command, Output};

use fqrt_fluid::config::Manifest;
use fqrt_fluid::model::ModelParams;
use serde_json::Value;

fn fqrt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fqrt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn validate_exit_codes() {
    assert_eq!(fqrt(&["validate"]).status.code(), Some(0));
    assert_eq!(fqrt(&["validate", "--set", "lambda1=0"]).status.code(), Some(1));
    assert_eq!(fqrt(&["validate", "--set", "kappa=5"]).status.code(), Some(2));
    assert_eq!(fqrt(&["validate", "--set", "bogus=1"]).status.code(), Some(1));
    assert_eq!(fqrt(&["validate", "--set", "lambda1"]).status.code(), Some(1));
    assert_eq!(fqrt(&["validate", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(fqrt(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_or_malformed_params_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(
        fqrt(&["stationary", "--params", missing.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"lambda1\": ").unwrap();
    assert_eq!(
        fqrt(&["stationary", "--params", bad.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn stationary_reports_canonical_point() {
    let v = json_stdout(&fqrt(&["stationary"]));
    assert!((v["x_star"]["z12"].as_f64().unwrap() - 0.2375).abs() < 1e-12);
    assert_eq!(v["z_star_exact"], "19/80");
    assert!((v["ssc"]["v_ball_alpha"].as_f64().unwrap() - 1.425).abs() < 1e-9);
}

#[test]
fn pi_oracle_matches_matrix_geometric() {
    let qbd = json_stdout(&fqrt(&["pi"]));
    let oracle = json_stdout(&fqrt(&["pi", "--oracle"]));
    assert_eq!(qbd["method"], "qbd");
    assert_eq!(oracle["method"], "oracle");
    let (a, b) = (qbd["pi12"].as_f64().unwrap(), oracle["pi12"].as_f64().unwrap());
    assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    assert!((a - 0.19948).abs() < 1e-4, "{a}");
}

#[test]
fn pi_rejects_bad_state() {
    assert_eq!(fqrt(&["pi", "--x0", "1,2"]).status.code(), Some(1));
    assert_eq!(fqrt(&["pi", "--x0", "1,2,-0.5"]).status.code(), Some(1));
    assert_eq!(fqrt(&["pi", "--x0", "1,2,9"]).status.code(), Some(1));
}

#[test]
fn solve_writes_manifest_trajectory_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = fqrt(&["solve", "--t-end", "10", "--out", dir.path().to_str().unwrap()]);
    let summary = json_stdout(&out);
    assert_eq!(summary, read_json(&dir.path().join("summary.json")));
    assert_eq!(summary["region_sequence"], serde_json::json!(["A"]));
    let manifest = Manifest::from_json(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.command, "solve");
    assert_eq!(manifest.params, ModelParams::canonical());
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,q1,q2,z11,z12,z22,z21,pi12,region,phase"));
    assert_eq!(lines.count(), summary["samples"].as_u64().unwrap() as usize);
}

#[test]
fn manifest_replays_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = fqrt(&["stationary", "--set", "lambda1=3", "--out", d]);
    let first = json_stdout(&out);
    let manifest = Manifest::from_json(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.overrides, vec!["lambda1=3".to_string()]);
    let params = dir.path().join("params.json");
    std::fs::write(&params, serde_json::to_string(&manifest.params).unwrap()).unwrap();
    let second = json_stdout(&fqrt(&["stationary", "--params", params.to_str().unwrap()]));
    assert_eq!(first, second);
}

#[test]
fn solve_rejects_bad_steps_and_non_reduced_ratio() {
    assert_eq!(fqrt(&["solve", "--h", "0"]).status.code(), Some(1));
    assert_eq!(fqrt(&["solve", "--h", "5"]).status.code(), Some(1));
    let unreduced = fqrt(&["solve", "--t-end", "1", "--set", "j=8", "--set", "k=10"]);
    assert_eq!(unreduced.status.code(), Some(1));
    let allowed = fqrt(&[
        "solve",
        "--t-end",
        "1",
        "--set",
        "j=8",
        "--set",
        "k=10",
        "--allow-unreduced",
    ]);
    assert!(allowed.status.success(), "{}", String::from_utf8_lossy(&allowed.stderr));
}

#[test]
fn simulate_writes_path_and_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let args = [
        "simulate",
        "--n",
        "50",
        "--t-end",
        "5",
        "--sample-dt",
        "0.5",
        "--seed",
        "9",
        "--window",
        "1,5",
    ];
    let a = json_stdout(&fqrt(&[&args[..], &["--out", d]].concat()));
    let b = json_stdout(&fqrt(&args));
    assert_eq!(a, b);
    let csv = std::fs::read_to_string(dir.path().join("sim_path.csv")).unwrap();
    assert!(csv.starts_with("t,Q1,Q2,Z11,Z12,Z21,Z22,D\n"));
    assert_eq!(csv.lines().count(), 12);
    assert!(dir.path().join("sim_summary.json").exists());
}

#[test]
fn simulate_rejects_bad_config() {
    assert_eq!(fqrt(&["simulate", "--n", "0"]).status.code(), Some(1));
    assert_eq!(fqrt(&["simulate", "--sample-dt", "-1"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    std::fs::write(&cfg, r#"{"n": 10, "unknown": 1}"#).unwrap();
    assert_eq!(
        fqrt(&["simulate", "--sim-config", cfg.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn compare_reports_each_scale() {
    let v = json_stdout(&fqrt(&[
        "compare", "--n", "50,200", "--t-end", "5", "--from", "1", "--window", "2,5",
    ]));
    assert_eq!(v["scales"].as_array().unwrap().len(), 2);
}
