use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"))
}

fn heterodyn(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heterodyn"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn heterodyn")
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn failed_checks(s: &Value) -> Vec<String> {
    s["failures"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["check"].as_str().unwrap().to_owned())
        .collect()
}

#[test]
fn entry_exit_settles_at_the_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let run = heterodyn(&["simulate"], &scenario("entry_exit"), dir.path());
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stdout));
    let s = summary(dir.path());
    let xbar = s["results"]["terminal"]["aggregate"][0].as_f64().unwrap();
    assert!((xbar - 0.5).abs() <= 1e-3, "{xbar}");
    assert!(dir.path().join("trajectory.csv").exists());
    assert!(dir.path().join("diagnostics.csv").exists());
}

#[test]
fn runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["simulate", "--t-end", "5"];
    heterodyn(&args, &scenario("matching_logit_bnn"), a.path());
    heterodyn(&args, &scenario("matching_logit_bnn"), b.path());
    for file in ["trajectory.csv", "diagnostics.csv"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert!(!x.is_empty());
        assert!(x == y, "{file} differs");
    }
}

#[test]
fn zero_game_is_already_an_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let run = heterodyn(&["equilibrium"], &scenario("zero_game"), dir.path());
    assert_eq!(run.status.code(), Some(0));
    assert_eq!(summary(dir.path())["results"]["br_violation"].as_f64(), Some(0.0));
    assert!(dir.path().join("equilibrium.json").exists());
}

#[test]
fn two_nodes_break_aggregability() {
    let dir = tempfile::tempdir().unwrap();
    let run = heterodyn(&["aggregability-demo"], &scenario("two_node_smith"), dir.path());
    assert_eq!(run.status.code(), Some(0));
    assert!(summary(dir.path())["results"]["spread"].as_f64().unwrap() > 0.1);
}

#[test]
fn failed_check_exits_one_and_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let run = heterodyn(&["simulate", "--t-end", "0.5"], &scenario("entry_exit"), dir.path());
    assert_eq!(run.status.code(), Some(1));
    let s = summary(dir.path());
    assert_eq!(s["passed"], Value::Bool(false));
    assert!(failed_checks(&s).contains(&"terminal_residual".to_owned()), "{s}");
    assert!(String::from_utf8_lossy(&run.stdout).contains("FAIL terminal_residual"));
}

#[test]
fn invalid_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(scenario("zero_game")).unwrap()).unwrap();
    cfg["initial_state"]["mix"] = serde_json::json!([0.2, 0.3, 0.5]);
    std::fs::write(&bad, cfg.to_string()).unwrap();
    let run = heterodyn(&["simulate"], &bad, &dir.path().join("out"));
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("initial_state"));

    let missing = heterodyn(&["simulate"], &dir.path().join("absent.json"), &dir.path().join("out"));
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn dt_override_is_used() {
    let dir = tempfile::tempdir().unwrap();
    heterodyn(&["simulate", "--dt", "0.05", "--t-end", "1"], &scenario("zero_game"), dir.path());
    let s = summary(dir.path());
    assert_eq!(s["results"]["dt"].as_f64(), Some(0.05));
    assert_eq!(s["results"]["steps"].as_u64(), Some(20));
}

#[test]
fn seed_override_changes_the_random_start() {
    let first_row = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        heterodyn(&["simulate", "--t-end", "0.1", "--seed", seed], &scenario("matching_logit_bnn"), dir.path());
        let text = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        text.lines().nth(1).unwrap().to_owned()
    };
    assert_eq!(first_row("3"), first_row("3"));
    assert_ne!(first_row("3"), first_row("4"));
}

#[test]
fn gradient_check_fails_without_a_potential() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("rps.json");
    let mut cfg: Value =
        serde_json::from_str(&std::fs::read_to_string(scenario("matching_logit_bnn")).unwrap()).unwrap();
    cfg["checks"] = serde_json::json!([{"check": "gradient"}]);
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    let run = heterodyn(&["potential-check"], &cfg_path, &dir.path().join("out"));
    assert_eq!(run.status.code(), Some(1));
    let s = summary(&dir.path().join("out"));
    assert_eq!(failed_checks(&s), vec!["gradient".to_owned()]);
    assert!(s["results"]["potential"].is_null());
}
