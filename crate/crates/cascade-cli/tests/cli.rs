//! Command-line behavior: error paths, config precedence, and the case-study
//! fixture driven through the shipped binary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn cascade_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cascade"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn missing_dataset_fails_with_path_in_message() {
    let output = run(cascade_bin().args([
        "calibrate",
        "--dataset",
        "/nonexistent/validation.jsonl",
        "--out",
        "/tmp/should-not-exist.json",
    ]));
    assert!(!output.status.success());
    assert!(
        stderr_of(&output).contains("/nonexistent/validation.jsonl"),
        "missing path not named: {}",
        stderr_of(&output)
    );
}

#[test]
fn run_without_thresholds_explains_what_is_needed() {
    let output = run(cascade_bin().args([
        "run",
        "--dataset",
        fixture("case_study_sims.jsonl").to_str().unwrap(),
        "--out",
        "/tmp/unused-traces.jsonl",
    ]));
    assert!(!output.status.success());
    let err = stderr_of(&output);
    assert!(err.contains("--calibration") && err.contains("--tau1"), "{err}");
}

#[test]
fn estimator_mismatch_aborts_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let artifact = dir.path().join("cal.json");
    let ok = run(cascade_bin().args([
        "calibrate",
        "--dataset",
        fixture("calibration_mosi.jsonl").to_str().unwrap(),
        "--out",
        artifact.to_str().unwrap(),
    ]));
    assert!(ok.status.success());

    let traces = dir.path().join("traces.jsonl");
    let output = run(cascade_bin().args([
        "run",
        "--dataset",
        fixture("calibration_mosi.jsonl").to_str().unwrap(),
        "--calibration",
        artifact.to_str().unwrap(),
        "--estimator",
        "ptd",
        "--out",
        traces.to_str().unwrap(),
    ]));
    assert!(!output.status.success());
    assert!(stderr_of(&output).contains("estimator mismatch"));
    assert!(!traces.exists(), "no trace file may be written on mismatch");
}

#[test]
fn case_study_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces.jsonl");
    let output = run(cascade_bin().args([
        "run",
        "--dataset",
        fixture("case_study_sims.jsonl").to_str().unwrap(),
        "--tau1",
        "0.59",
        "--tau2",
        "0.48",
        "--out",
        traces.to_str().unwrap(),
    ]));
    assert!(output.status.success(), "{}", stderr_of(&output));
    let body = std::fs::read_to_string(&traces).unwrap();
    assert!(body.contains("\"outcome\":\"stage3_cross_verify\""));
    assert!(body.contains("\"final\":-0.5"));

    let report_prefix = dir.path().join("report");
    let output = run(cascade_bin().args([
        "eval",
        "--dataset",
        fixture("case_study_sims.jsonl").to_str().unwrap(),
        "--traces",
        traces.to_str().unwrap(),
        "--out",
        report_prefix.to_str().unwrap(),
    ]));
    assert!(output.status.success(), "{}", stderr_of(&output));
    let report = std::fs::read_to_string(report_prefix.with_extension("json")).unwrap();
    assert!(report.contains("\"mae\": 0.09999999999999998"));
}

#[test]
fn tau1_override_forces_the_fast_path() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces.jsonl");
    let output = run(cascade_bin().args([
        "run",
        "--dataset",
        fixture("calibration_mosi.jsonl").to_str().unwrap(),
        "--tau1",
        "1e9",
        "--tau2",
        "0.5",
        "--out",
        traces.to_str().unwrap(),
    ]));
    assert!(output.status.success(), "{}", stderr_of(&output));
    let body = std::fs::read_to_string(&traces).unwrap();
    for line in body.lines() {
        assert!(line.contains("\"outcome\":\"stage1_fast\""), "{line}");
    }
    assert!(stdout_of(&output).contains("stage1_fast=40"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.toml");
    std::fs::write(&config_path, "seed = 1\nsynth_n = 5\nsynth_profile = \"mixed\"\n").unwrap();

    let out_default = dir.path().join("from-file.jsonl");
    let ok = run(cascade_bin().args([
        "gen-synth",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out_default.to_str().unwrap(),
    ]));
    assert!(ok.status.success());
    assert_eq!(
        std::fs::read_to_string(&out_default).unwrap().lines().count(),
        5,
        "config-file synth_n should apply"
    );

    let out_flag = dir.path().join("from-flag.jsonl");
    let ok = run(cascade_bin().args([
        "gen-synth",
        "--config",
        config_path.to_str().unwrap(),
        "--n",
        "9",
        "--out",
        out_flag.to_str().unwrap(),
    ]));
    assert!(ok.status.success());
    assert_eq!(
        std::fs::read_to_string(&out_flag).unwrap().lines().count(),
        9,
        "flag must beat config file"
    );
}

#[test]
fn eval_with_mismatched_ids_is_a_join_error() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces.jsonl");
    let ok = run(cascade_bin().args([
        "run",
        "--dataset",
        fixture("case_study_sims.jsonl").to_str().unwrap(),
        "--tau1",
        "0.59",
        "--tau2",
        "0.48",
        "--out",
        traces.to_str().unwrap(),
    ]));
    assert!(ok.status.success());

    // Evaluate those traces against a dataset with different ids.
    let output = run(cascade_bin().args([
        "eval",
        "--dataset",
        fixture("calibration_mosi.jsonl").to_str().unwrap(),
        "--traces",
        traces.to_str().unwrap(),
        "--out",
        dir.path().join("report").to_str().unwrap(),
    ]));
    assert!(!output.status.success());
    assert!(stderr_of(&output).contains("join"), "{}", stderr_of(&output));
}

#[test]
fn ablate_names_missing_estimator_columns() {
    // The calibration fixture has no aux/ensemble columns, so the
    // estimator-swap variants cannot run on it.
    let dir = tempfile::tempdir().unwrap();
    let output = run(cascade_bin().args([
        "ablate",
        "--dataset",
        fixture("calibration_mosi.jsonl").to_str().unwrap(),
        "--val-dataset",
        fixture("calibration_mosi.jsonl").to_str().unwrap(),
        "--out",
        dir.path().join("ablate").to_str().unwrap(),
    ]));
    assert!(!output.status.success());
    assert!(
        stderr_of(&output).contains("small_aux_ptd"),
        "missing column not named: {}",
        stderr_of(&output)
    );
}

#[test]
fn effective_config_header_is_printed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("synth.jsonl");
    let output = run(cascade_bin().args([
        "gen-synth",
        "--n",
        "3",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]));
    assert!(output.status.success());
    let stdout = stdout_of(&output);
    let header = stdout.lines().next().unwrap();
    assert!(header.starts_with("# config gen-synth {"));
    assert!(header.contains("\"seed\":5"));
}

#[test]
fn commands_do_not_mutate_input_files() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("data.jsonl");
    std::fs::copy(fixture("calibration_mosi.jsonl"), &dataset).unwrap();
    let before = std::fs::read(&dataset).unwrap();

    let artifact = dir.path().join("cal.json");
    run(cascade_bin().args([
        "calibrate",
        "--dataset",
        dataset.to_str().unwrap(),
        "--out",
        artifact.to_str().unwrap(),
    ]));
    run(cascade_bin().args([
        "run",
        "--dataset",
        dataset.to_str().unwrap(),
        "--calibration",
        artifact.to_str().unwrap(),
        "--out",
        dir.path().join("t.jsonl").to_str().unwrap(),
    ]));
    assert_eq!(before, std::fs::read(&dataset).unwrap());
}
