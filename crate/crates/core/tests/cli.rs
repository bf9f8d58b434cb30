//! The `mmadoa` binary: exit codes and outputs.

use std::process::{Command, Output};

fn mmadoa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmadoa")).args(args).output().unwrap()
}

#[test]
fn bad_configuration_exits_with_2() {
    assert_eq!(
        mmadoa(&["sweep", "--trials=0", "--out=/dev/null"]).status.code(),
        Some(2)
    );
    assert_eq!(mmadoa(&["crb", "--scenario.snr_db=oops"]).status.code(), Some(2));
    assert_eq!(
        mmadoa(&["crb", "--config=/nonexistent/config.json"]).status.code(),
        Some(2)
    );
    assert_eq!(mmadoa(&["sweep"]).status.code(), Some(2), "no output path");
    assert_eq!(mmadoa(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn unreadable_data_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("cal.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let source = format!("--antenna={{\"file\":\"{}\"}}", bad.display());
    let out = mmadoa(&["fit", &source]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_then_fit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cal = dir.path().join("cal.json");
    let cal_arg = format!("--out={}", cal.display());
    assert!(mmadoa(&["synth", &cal_arg]).status.success());
    let source = format!("--antenna={{\"file\":\"{}\"}}", cal.display());
    let out = mmadoa(&["fit", &source]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let reports: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let co = &reports[0];
    assert_eq!(co["slot"], "co");
    assert!(co["relative_rms"].as_f64().unwrap() < 1e-6, "{co}");
}

#[test]
fn simulate_and_crb_report() {
    let out = mmadoa(&["simulate", "--estimators=[\"c-ml\",\"nc-ml\"]"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["estimates"].as_array().unwrap().len(), 2);
    let truth = report["truth"][0]["theta_deg"].as_f64().unwrap();
    let est = report["estimates"][0]["signals"][0]["theta_deg"].as_f64().unwrap();
    assert!((truth - est).abs() < 2.0, "{truth} vs {est}");

    let out = mmadoa(&["crb"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("theta"));
}

#[test]
fn sweep_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let out_arg = format!("--out={}", csv.display());
    let out = mmadoa(&["sweep", "--trials=5", "--axis.stop=10", &out_arg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("schema_version,config_hash,axis,axis_value,estimator"));
    assert_eq!(text.lines().count(), 1 + 3);
    assert!(csv.with_extension("json").exists());
}
