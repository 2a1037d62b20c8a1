use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use invab_core::demand::{DemandModel, Noise};
use invab_core::inventory::{ItemParams, Scenario};
use serde_json::{json, Value};

fn invab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_invab"))
        .args(args)
        .env_remove("INVAB_CONFIG")
        .env_remove("INVAB_PRESET")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(dir: &Path, doc: &Value) -> String {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(doc).unwrap()).unwrap();
    path.display().to_string()
}

/// One item, deterministic demand 1, base stock 1 under control and 2 under treatment.
fn toy_scenario() -> Scenario {
    Scenario::new(
        vec![ItemParams::new(2.0, 1.0).unwrap()],
        f64::INFINITY,
        DemandModel::stationary(
            1,
            Noise::Discrete {
                support: vec![1.0],
                probabilities: vec![1.0],
            },
        )
        .unwrap(),
        vec![vec![1.0; 2]],
        vec![vec![2.0; 2]],
    )
    .unwrap()
}

#[test]
fn run_writes_raw_and_summary_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let result = invab(&["run", "--preset", "fig2-stationary-medium", "--reps", "3", "--gte-reps", "10", "--out", out]);
    assert!(result.status.success(), "{}", stderr(&result));
    let raw = fs::read_to_string(dir.path().join("fig2-stationary-medium_raw.csv")).unwrap();
    let summary = fs::read_to_string(dir.path().join("fig2-stationary-medium_summary.csv")).unwrap();
    assert_eq!(raw.lines().next().unwrap(), "scenario,design,estimator,replication,estimate");
    // 4 designs, 2 estimators, 3 replications
    assert_eq!(raw.lines().count(), 1 + 4 * 2 * 3);
    assert!(summary.lines().next().unwrap().starts_with("scenario,design,estimator"));
    assert_eq!(summary.lines().count(), 1 + 4 * 2);
}

#[test]
fn json_output_parses() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let result = invab(&[
        "run", "--preset", "fig3-stationary-low", "--reps", "2", "--gte-reps", "4", "--out", out, "--format", "json",
    ]);
    assert!(result.status.success(), "{}", stderr(&result));
    let text = fs::read_to_string(dir.path().join("fig3-stationary-low.json")).unwrap();
    let doc: Value = serde_json::from_str(&text).unwrap();
    assert!(doc.is_object());
}

#[test]
fn same_seed_same_output() {
    let dir = tempfile::tempdir().unwrap();
    let read = |sub: &str| {
        let out = dir.path().join(sub);
        let result = invab(&[
            "run", "--preset", "fig2-nonstationary-loose", "--reps", "4", "--gte-reps", "6", "--seed", "11",
            "--out", out.to_str().unwrap(),
        ]);
        assert!(result.status.success(), "{}", stderr(&result));
        fs::read(out.join("fig2-nonstationary-loose_raw.csv")).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn missing_scenario_is_a_config_error() {
    let result = invab(&["run", "--reps", "2"]);
    assert_eq!(result.status.code(), Some(2));
    assert!(stderr(&result).contains("scenario"), "{}", stderr(&result));
}

#[test]
fn unknown_config_key_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\n  \"reps\": 3,\n  \"replications\": 4\n}\n").unwrap();
    let result = invab(&["check", "--config", path.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    let err = stderr(&result);
    assert!(err.contains("line 3") && err.contains("replications"), "{err}");
}

#[test]
fn bad_preset_is_a_config_error() {
    let result = invab(&["bias", "--preset", "fig4-stationary-tight"]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn bias_on_inline_toy() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &json!({ "scenario": { "inline": toy_scenario() }, "designs": ["SW", "IR"] }),
    );
    let result = invab(&["bias", "--config", &config]);
    assert!(result.status.success(), "{}", stderr(&result));
    let reports: Value = serde_json::from_str(&stdout(&result)).unwrap();
    let sw = &reports[0];
    assert_eq!(sw["design"], "SW");
    assert!((sw["bias"].as_f64().unwrap() + 0.5).abs() < 1e-12, "{sw}");
    assert_eq!(reports.as_array().unwrap().len(), 2);
}

#[test]
fn enumeration_beyond_limit_is_a_resource_error() {
    let n = 25;
    let scenario = Scenario::new(
        vec![ItemParams::new(2.0, 1.0).unwrap(); n],
        10.0,
        DemandModel::stationary(n, Noise::Uniform { low: 0.0, width: 1.0 }).unwrap(),
        vec![vec![1.0; 2]; n],
        vec![vec![1.5; 2]; n],
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &json!({ "scenario": { "inline": scenario }, "designs": ["IR"] }));
    let result = invab(&["bias", "--config", &config]);
    assert_eq!(result.status.code(), Some(3), "{}", stderr(&result));
    assert!(stderr(&result).to_lowercase().contains("monte"), "{}", stderr(&result));

    let sampled = invab(&["bias", "--config", &config, "--mode", "mc"]);
    assert!(sampled.status.success(), "{}", stderr(&sampled));
}

#[test]
fn check_reports_verdicts() {
    let result = invab(&["check", "--preset", "fig3-stationary-high", "--format", "json"]);
    assert!(result.status.success(), "{}", stderr(&result));
    let checks: Value = serde_json::from_str(&stdout(&result)).unwrap();
    let checks = checks.as_array().unwrap();
    assert_eq!(checks.len(), 4);
    assert!(checks.iter().all(|c| c["holds"].is_boolean()));

    let table = invab(&["check", "--preset", "fig3-stationary-high"]);
    assert!(table.status.success());
    assert!(stdout(&table).contains("condition"));
}

#[test]
fn default_config_round_trips() {
    let result = invab(&["default-config"]);
    assert!(result.status.success());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("default.json");
    fs::write(&path, &result.stdout).unwrap();
    let check = invab(&["check", "--config", path.to_str().unwrap()]);
    assert!(check.status.success(), "{}", stderr(&check));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &json!({ "reps": 0 }));
    let bad = invab(&["check", "--config", &config]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("reps"), "{}", stderr(&bad));
    let out = dir.path().join("o");
    let fixed = invab(&[
        "run", "--config", &config, "--preset", "fig3-stationary-low", "--reps", "1", "--gte-reps", "2", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(fixed.status.success(), "{}", stderr(&fixed));
    assert!(out.join("fig3-stationary-low_raw.csv").exists());
}

#[test]
fn reproduce_writes_every_panel_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let result = invab(&["reproduce", "fig2", "--reps", "2", "--gte-reps", "4", "--out", out]);
    assert!(result.status.success(), "{}", stderr(&result));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fig2_manifest.json")).unwrap()).unwrap();
    let panels = manifest["panels"].as_array().unwrap();
    assert_eq!(panels.len(), 6);
    for panel in panels {
        let raw = panel["raw"].as_str().unwrap();
        assert!(dir.path().join(raw).exists(), "{raw}");
    }
}
