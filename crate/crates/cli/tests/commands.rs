use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn config(name: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", name].iter().collect()
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_merge-cbf")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = cli(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Header and data rows, without the leading comment.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# schema="), "{}", path.display());
    text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

fn column(rows: &[Vec<String>], name: &str) -> usize {
    rows[0].iter().position(|h| h == name).unwrap()
}

#[test]
fn run_writes_one_row_per_step_and_honours_overrides() {
    let dir = TempDir::new().unwrap();
    let cfg = config("validity.toml");
    run_ok(&["run", "--config", s(&cfg), "--out", s(dir.path()), "--set", "alpha_nominal=15", "--set", "horizon_steps=50"]);
    let rows = csv_rows(&dir.path().join("trace.csv"));
    assert_eq!(rows.len(), 1 + 51);
    assert_eq!(rows[1][column(&rows, "alpha")], "15");
    let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("command=run"));
    assert!(manifest.contains("trace.csv"));
    let summary = csv_rows(&dir.path().join("summary.csv"));
    assert_eq!(summary[1][column(&summary, "alpha_initial")], "15");
}

#[test]
fn resolved_snapshot_reproduces_the_run() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    run_ok(&["run", "--config", s(&config("validity.toml")), "--out", s(a.path()), "--seed", "5", "--set", "ego.init_arc_m=140"]);
    let snapshot = a.path().join("config.resolved.toml");
    run_ok(&["run", "--config", s(&snapshot), "--out", s(b.path())]);
    let ta = std::fs::read(a.path().join("trace.csv")).unwrap();
    let tb = std::fs::read(b.path().join("trace.csv")).unwrap();
    assert_eq!(ta, tb);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let out = cli(&["run", "--config", "missing-scenario.toml", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing-scenario.toml"));

    let out = cli(&["run", "--config", s(&config("validity.toml")), "--out", s(dir.path()), "--set", "warp=9"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("warp") && err.contains("controller.alpha_nominal"), "{err}");

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[scenario]\ndt_s = \"fast\"\n").unwrap();
    let out = cli(&["run", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let out = cli(&["validity", "--config", s(&config("validity.toml")), "--out", s(dir.path()), "--trials", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = cli(&["run", "--config", s(&config("validity.toml")), "--out", s(&blocker.join("sub"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn validity_aggregate_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        run_ok(&["validity", "--config", s(&config("validity.toml")), "--out", s(d.path()), "--trials", "24"]);
    }
    for f in ["aggregate.csv", "trials.csv", "histogram.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let agg = csv_rows(&a.path().join("aggregate.csv"));
    assert_eq!(agg[1][column(&agg, "collision_rate")], "0");
    assert_eq!(csv_rows(&a.path().join("trials.csv")).len(), 25);
}

#[test]
fn compare_marks_zones_only_under_stress() {
    let stress = TempDir::new().unwrap();
    run_ok(&["compare", "--config", s(&config("stress.toml")), "--out", s(stress.path())]);
    let zones = csv_rows(&stress.path().join("zones.csv"));
    assert!(zones[1..].iter().any(|r| r[0] == "fixed-infeasible"));
    assert!(stress.path().join("trace_fixed.csv").exists());

    let calm = TempDir::new().unwrap();
    run_ok(&["compare", "--config", s(&config("validity.toml")), "--out", s(calm.path())]);
    assert_eq!(csv_rows(&calm.path().join("zones.csv")).len(), 1);
}

#[test]
fn sweep_writes_one_trace_per_alpha() {
    let dir = TempDir::new().unwrap();
    run_ok(&["sweep", "--config", s(&config("alpha_sweep.toml")), "--out", s(dir.path()), "--alphas", "1,2,5,10,15"]);
    for a in ["1", "2", "5", "10", "15"] {
        assert!(dir.path().join(format!("trace_alpha_{a}.csv")).exists(), "{a}");
    }
    let sweep = csv_rows(&dir.path().join("sweep.csv"));
    let col = column(&sweep, "first_deviation_step");
    let steps: Vec<usize> = sweep[1..].iter().map(|r| r[col].parse().unwrap()).collect();
    assert!(steps.windows(2).all(|w| w[0] <= w[1]), "{steps:?}");
}

#[test]
fn flags_switch_controller_modes() {
    let dir = TempDir::new().unwrap();
    run_ok(&["run", "--config", s(&config("stress.toml")), "--out", s(dir.path()), "--fixed-alpha", "--paper-coefficient"]);
    let snapshot = std::fs::read_to_string(dir.path().join("config.resolved.toml")).unwrap();
    assert!(snapshot.contains("adaptive = false"));
    assert!(snapshot.contains("coefficient_mode = \"paper-literal\""));
}
