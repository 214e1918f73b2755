use std::path::Path;
use std::process::{Command, Output};

use modn::model::TrajectoryDump;

fn modn(args: &[&str], cwd: &Path) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_modn"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "modn {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn synth_train_eval_trajectory_iio() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    modn(&["synth", "--records", "200", "--seed", "3", "--out", "data.csv", "--schema", "schema.json"], d);
    std::fs::write(
        d.join("train.json"),
        r#"{"epochs": 3, "model": {"state_dim": 8, "hidden_activation": "tanh"}}"#,
    )
    .unwrap();
    modn(
        &["train", "--data", "data.csv", "--schema", "schema.json", "--config", "train.json", "--out", "m.modn", "--report", "report.json"],
        d,
    );
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["train_loss"].as_array().unwrap().len(), 3);

    let out = modn(&["eval", "--model", "m.modn", "--data", "data.csv", "--schema", "schema.json", "--json"], d);
    let scores: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let overall = scores["overall"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&overall));

    let out = modn(
        &["trajectory", "--model", "m.modn", "--data", "data.csv", "--schema", "schema.json", "--record", "r00007"],
        d,
    );
    let dump: TrajectoryDump = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(dump.steps[0].feature_id, "initial");

    std::fs::write(d.join("answers.json"), r#"[{"feature_id": "b0", "value": "yes"}]"#).unwrap();
    let out = modn(&["trajectory", "--model", "m.modn", "--answers", "answers.json"], d);
    let dump: TrajectoryDump = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(dump.steps.len(), 2);

    std::fs::write(
        d.join("exp.json"),
        r#"{
            "dataset": {"kind": "synthetic", "spec": {"n_records": 200, "n_targets": 2}},
            "overlaps": [0.8],
            "scenarios": ["static", "modular_update"],
            "seeds": [0, 1],
            "train": {"epochs": 2, "model": {"state_dim": 8, "hidden_activation": "tanh"}}
        }"#,
    )
    .unwrap();
    modn(&["iio", "--config", "exp.json", "--output-dir", "out"], d);
    assert!(d.join("out/results.csv").exists());
    assert!(d.join("out/results.json").exists());
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_modn"))
        .args(["eval", "--model", "missing.modn", "--data", "x.csv", "--schema", "s.json"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}
