//! Binary-level tests: exit codes and artifact files for each subcommand.

use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_saddlelab");

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let base = "\
objective.name = double_well_2d
method.name = shb
method.beta = 0.9
oracle.model = sphere
oracle.sigma = 0.5
experiment.seed = 11
experiment.horizon = 2000
experiment.record_stride = 100
experiment.initial = [0, 0.5]
trials = 12
parallelism = 1
";
    let path = dir.join("run.cfg");
    std::fs::write(&path, format!("{base}{extra}")).unwrap();
    path
}

#[test]
fn run_subcommand_writes_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("results");
    let status = Command::new(BIN)
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("report.json").exists());
    assert!(out.join("summary.csv").exists());
    assert!(out.join("trial_11.csv").exists());
}

#[test]
fn flags_override_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("results");
    let status = Command::new(BIN)
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--trials", "10", "--seed", "99"])
        .status()
        .unwrap();
    assert!(status.success());
    let report = std::fs::read_to_string(out.join("report.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(json["seed"], serde_json::json!(99));
    assert_eq!(json["report"]["trials"], serde_json::json!(10));
    assert!(!out.join("trial_10.csv").exists());
}

#[test]
fn check_exits_one_when_a_verdict_fails() {
    let dir = tempfile::tempdir().unwrap();
    // The exact oracle has zero excitation, so that verdict must fail.
    let cfg = write_config(
        dir.path(),
        "oracle.model = exact\nprobe.samples = 100\nprobe.draws = 100\nprobe.excitation_draws = 100000\nprobe.shell_samples = 100\n",
    );
    // write_config already set oracle.model; rewrite without the duplicate.
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("oracle.model = sphere\n", "");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("checked");
    let status = Command::new(BIN)
        .args(["check", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    assert!(out.join("assumptions.json").exists());
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "method.betta = 0.9\n");
    let output = Command::new(BIN)
        .args(["run", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("method.betta"), "stderr: {stderr}");

    let missing = Command::new(BIN)
        .args(["run", "--config", "/nonexistent/path.cfg"])
        .status()
        .unwrap();
    assert_eq!(missing.code(), Some(2));
}

#[test]
fn sweep_writes_per_value_directories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("sweep");
    let status = Command::new(BIN)
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--key", "method.beta", "--values", "0,0.9"])
        .status()
        .unwrap();
    assert!(status.success());
    let sweep = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
    assert!(out.join("beta_0.9").join("summary.csv").exists());
}

#[test]
fn rate_subcommand_emits_the_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("experiment.horizon = 2000", "experiment.horizon = 20000")
        .replace("trials = 12", "trials = 10");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("rate");
    let status = Command::new(BIN)
        .args(["rate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let rate = std::fs::read_to_string(out.join("rate.csv")).unwrap();
    assert!(rate.starts_with("bin_center_n,max_v_norm,fitted_v_norm\n"));
    assert!(rate.lines().count() > 3);
}
