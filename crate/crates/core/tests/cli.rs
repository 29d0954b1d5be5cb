use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn sspwct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sspwct")).args(args).output().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn malformed_instance_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, b"{\"contracts\": [").unwrap();
    let out = sspwct(&["run", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn invalid_instance_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let mut inst: Value = serde_json::from_slice(&std::fs::read(fixture("late_upgrade.json")).unwrap()).unwrap();
    inst["branches"][0]["location"] = serde_json::json!([2, 1]);
    std::fs::write(&bad, inst.to_string()).unwrap();
    assert_eq!(sspwct(&["run", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn trace_ends_in_the_plain_outcome() {
    let inst = fixture("filled_original.json");
    let plain = json(&sspwct(&["run", inst.to_str().unwrap()]));
    let trace = json(&sspwct(&["run", "--trace", inst.to_str().unwrap()]));
    assert_eq!(trace["outcome"], plain);
    let reverse = json(&sspwct(&["run", "--policy", "reverse", inst.to_str().unwrap()]));
    assert_eq!(reverse, plain);
}

#[test]
fn verify_accepts_outcome_and_flags_blocked_one() {
    let dir = tempfile::tempdir().unwrap();
    let inst = fixture("late_upgrade.json");
    let good = dir.path().join("good.json");
    std::fs::write(&good, sspwct(&["run", inst.to_str().unwrap()]).stdout).unwrap();
    let ok = sspwct(&["verify", inst.to_str().unwrap(), good.to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(json(&ok)["stable"], Value::Bool(true));

    // Nobody placed although i2 is the top choice of an active seat.
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, br#"{"assignment": []}"#).unwrap();
    let blocked = sspwct(&["verify", inst.to_str().unwrap(), empty.to_str().unwrap()]);
    assert_eq!(blocked.status.code(), Some(3));
    assert_eq!(json(&blocked)["stable"], Value::Bool(false));
}

#[test]
fn flexibility_experiment_reports_dominance() {
    let inst = fixture("filled_original.json");
    let out = sspwct(&["experiment", inst.to_str().unwrap(), "flexibility", "--branch", "b1", "--slot", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_eq!(report["verdict"]["verdict"], "pareto_dominates");
    assert_eq!(report["strict"], Value::Bool(true));
}

#[test]
fn experiment_argument_errors_exit_2() {
    let inst = fixture("filled_original.json");
    let p = inst.to_str().unwrap();
    assert_eq!(sspwct(&["experiment", p, "flexibility", "--slot", "1"]).status.code(), Some(2));
    assert_eq!(sspwct(&["experiment", p, "flexibility", "--branch", "b1", "--slot", "2"]).status.code(), Some(2));
    assert_eq!(sspwct(&["experiment", p, "flexibility", "--branch", "b9", "--slot", "1"]).status.code(), Some(2));
}

#[test]
fn oracle_on_fixture_passes() {
    let inst = fixture("late_upgrade.json");
    let out = sspwct(&["oracle", inst.to_str().unwrap(), "--trials", "2", "--order-seeds", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["passed"], Value::Bool(true));
}
