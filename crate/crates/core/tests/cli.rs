//! End-to-end runs of the command-line binary.

use std::path::Path;
use std::process::{Command, Output};

use switched_ni::export::parse_trajectory;

const SCENARIOS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios");

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_switched-ni")).args(args).output().unwrap()
}

fn out_flag(dir: &Path) -> String {
    dir.to_str().unwrap().to_owned()
}

#[test]
fn reproduce_fig4_passes_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["reproduce-fig4", "--out", &out_flag(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trajectory.csv", "report.json", "trajectory.svg"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["exit_code"], 0);
    assert_eq!(report["scenario_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn indefinite_storage_scenario_exits_two_with_a_witness() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = format!("{SCENARIOS}/kh15-negative.scenario");
    let out = run(&["certify", &scenario, "--out", &out_flag(dir.path()), "--no-plot"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let pd = report["reports"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["check_name"].as_str().unwrap().starts_with("positive-definite"))
        .unwrap();
    assert_eq!(pd["verdict"], "fail");
    let x: Vec<f64> = serde_json::from_value(pd["worst_point"]["x"].clone()).unwrap();
    let (x1, x2, xh) = (x[0], x[1], x[2]);
    let w = 0.25 * x1.powi(4) + 0.5 * x1 * x1 + 0.5 * x2 * x2 + xh * xh / 3.0 - xh * x1;
    assert!(w < 0.0, "named point has W = {w}");
    assert!((w - pd["worst_residual"].as_f64().unwrap()).abs() <= 1e-12);
}

#[test]
fn invalid_gain_is_a_runtime_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(format!("{SCENARIOS}/fig4.scenario"))
        .unwrap()
        .replace("k_h = 0.8", "k_h = 0.0");
    let path = dir.path().join("bad.scenario");
    std::fs::write(&path, text).unwrap();
    let out = run(&["certify", path.to_str().unwrap(), "--out", &out_flag(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("higs.k_h"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn missing_scenario_is_a_runtime_error() {
    let out = run(&["simulate", "/nonexistent/nothing.scenario"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn simulate_writes_trajectory_only() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = format!("{SCENARIOS}/fig4.scenario");
    let out = run(&["simulate", &scenario, "--out", &out_flag(dir.path()), "--no-plot", "--step", "0.002"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("report.json").exists());
    assert!(!dir.path().join("trajectory.svg").exists());
    let table = parse_trajectory(std::fs::File::open(dir.path().join("trajectory.csv")).unwrap()).unwrap();
    assert_eq!(table.metadata.get("step"), Some("0.002"));
    let events = table.rows.iter().filter(|r| r.event).count();
    assert!(events > 0);
    // 15 s at 2 ms is 7501 grid rows, and each event adds one row
    assert_eq!(table.rows.len(), 7501 + events);
    assert_eq!(table.state_dim, 3);
}

#[test]
fn tolerance_override_reaches_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["reproduce-fig4", "--out", &out_flag(dir.path()), "--no-plot", "--tol", "1e-5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["tolerance"], 1e-5);
}
