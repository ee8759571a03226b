//! Command-line behavior: outputs and exit codes.

use std::fs;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_layerwise");

fn run(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().unwrap()
}

#[test]
fn summarize_reads_a_scores_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.csv");
    fs::write(&path, "layer,rho\n1,0.1\n2,0.5\n3,0.3\n").unwrap();
    let out = run(&["summarize", "--scores", path.to_str().unwrap()]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["summary"]["peak_layer"], 2);
    assert_eq!(json["summary"]["peak_depth"], 0.5);
}

#[test]
fn missing_container_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing");
    let out = run(&["validate", "--container", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn trajectory_run_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("c");
    let o = dir.path().join("o");
    let synth = run(&[
        "synth",
        "trajectory",
        "--n-cells",
        "300",
        "--noise",
        "0,0.5",
        "--out",
        c.to_str().unwrap(),
    ]);
    assert!(synth.status.success());
    let out = run(&[
        "trajectory",
        "--container",
        c.to_str().unwrap(),
        "--out",
        o.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let scores = fs::read_to_string(o.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 3);
    assert!(scores.starts_with("layer,depth,rho,p_value\n"));
    assert!(o.join("summary.json").exists());
    assert!(fs::read_to_string(o.join("curve.svg"))
        .unwrap()
        .contains("<svg"));
}

#[test]
fn zero_jobs_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("c");
    run(&[
        "synth",
        "trajectory",
        "--n-cells",
        "100",
        "--noise",
        "0",
        "--out",
        c.to_str().unwrap(),
    ]);
    let out = run(&[
        "trajectory",
        "--container",
        c.to_str().unwrap(),
        "--jobs",
        "0",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("E_PARAMETER"));
}
