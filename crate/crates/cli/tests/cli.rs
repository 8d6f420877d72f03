use std::path::Path;
use std::process::{Command, Output};

use aialo_core::baselines::uniform_sample_count;

fn aialo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aialo")).args(args).env_remove("AIALO_THREADS").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = aialo(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    aialo(args).status.code().unwrap()
}

fn write_instance(dir: &Path, name: &str, args: &[&str]) -> String {
    let path = dir.join(name);
    let mut full = vec!["generate", "--out", path.to_str().unwrap()];
    full.extend_from_slice(args);
    ok(&full);
    path.to_str().unwrap().to_owned()
}

#[test]
fn generate_then_run_static() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path(), "b.json", &["--n", "3", "--m", "12", "--seed", "5"]);
    let report: serde_json::Value = serde_json::from_str(&ok(&["run", "--alg", "static", "--instance", &inst])).unwrap();
    assert_eq!(report["total_samples"].as_u64().unwrap(), 12 * uniform_sample_count(1.0, 12, 0.1, 0.1));
    assert_eq!(report["correct"], serde_json::Value::Bool(true));
}

#[test]
fn table1_is_reproducible() {
    let args = ["table1", "--trials", "5", "--seed", "7"];
    let a = ok(&args);
    assert_eq!(a, ok(&args));
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "algorithm,trials,binding_mean,nonbinding_mean,mean_samples,correct_rate,failures");
    assert_eq!(lines.len(), 4);
}

#[test]
fn sweep_has_one_row_per_algorithm_and_value() {
    let csv = ok(&["sweep", "--axis", "m", "--values", "40,80", "--trials", "3", "--n", "3"]);
    assert_eq!(csv.lines().count(), 1 + 6);
}

#[test]
fn thread_count_does_not_change_output() {
    let args = ["cdf", "--trials", "6", "--m", "20", "--n", "3", "--seed", "2"];
    let serial = Command::new(env!("CARGO_BIN_EXE_aialo")).args(args).env("AIALO_THREADS", "1").output().unwrap();
    let parallel = Command::new(env!("CARGO_BIN_EXE_aialo")).args(args).env("AIALO_THREADS", "4").output().unwrap();
    assert!(serial.status.success());
    assert_eq!(serial.stdout, parallel.stdout);
}

#[test]
fn bad_input_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let b = write_instance(dir.path(), "b.json", &["--n", "2", "--m", "4"]);
    let c = write_instance(dir.path(), "c.json", &["--unknown", "c"]);
    assert_eq!(code(&["run", "--alg", "simplex", "--instance", &b]), 2);
    assert_eq!(code(&["run", "--alg", "succ-elim", "--instance", &b]), 2);
    assert_eq!(code(&["run", "--alg", "ucb", "--instance", &c]), 2);
    assert_eq!(code(&["run", "--alg", "ucb", "--instance", "/nonexistent.json"]), 2);
    assert_eq!(code(&["sweep", "--axis", "colour"]), 2);
    assert_eq!(code(&["table1", "--trials", "0"]), 2);
    assert_eq!(code(&["table1", "--delta", "1.5"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    let out = Command::new(env!("CARGO_BIN_EXE_aialo")).args(["table1"]).env("AIALO_THREADS", "many").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    // thirteen coordinates is past the vertex enumeration limit
    let path = dir.path().join("wide.json");
    let n = 13;
    let inst = serde_json::json!({
        "n": n,
        "m": 1,
        "c": vec![1.0; n],
        "A": [vec![1.0; n]],
        "b": [1.0],
        "upper": 1.0,
        "R": 4.0,
        "unknown": "c",
        "sigma": 1.0,
    });
    std::fs::write(&path, inst.to_string()).unwrap();
    let out = aialo(&["run", "--alg", "succ-elim", "--instance", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
