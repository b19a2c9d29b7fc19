//! End-to-end checks of the command-line interface: subcommands, output
//! files, and exit codes.

use std::path::Path;
use std::process::Output;

fn ccsgp(args: &[&str], dir: &Path) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_ccsgp"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{
        "schema_version": 1,
        "system": {{"type": "logistic_growth"}},
        "trajectory_count": 2,
        "trajectory_length": 8,
        "noise_grid": [{{"process_var": 1e-3, "measurement_var": 1e-2}}],
        "seeds": [1, 2],
        "methods": ["st", "ccs"],
        "iterations": 2,
        "test_count": 20,
        "master_seed": 7,
        "optimizer": {{"n_starts": 1, "max_iters": 30, "tol": 1e-5}}{extra}
    }}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn validate_accepts_a_good_config() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "");
    let out = ccsgp(&["validate", "--config", "config.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ok: 4 cells"), "stdout: {stdout}");
}

#[test]
fn validate_rejects_a_bad_config_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("config.json"), "{\"schema_version\": 9}").unwrap();
    let out = ccsgp(&["validate", "--config", "config.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn run_produces_results_and_summarize_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "");
    let out = ccsgp(
        &["run", "--config", "config.json", "--out", "results", "--workers", "2"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("4 of 4 cells succeeded"), "stdout: {stdout}");
    assert!(stdout.contains("median_mse"), "stdout: {stdout}");

    let csv = std::fs::read_to_string(dir.path().join("results/results.csv")).unwrap();
    assert!(csv.starts_with(
        "system,method,sigma_w2,sigma_r2,seed,mse,fit_ms,predict_ms,jitter_events,beta_events"
    ));
    assert_eq!(csv.trim().lines().count(), 5);
    assert!(dir.path().join("results/results.json").exists());

    let out = ccsgp(
        &["summarize", "--results", "results/results.csv"],
        dir.path(),
    );
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("st") || stdout.contains("ST"), "stdout: {stdout}");
}

#[test]
fn method_override_restricts_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "");
    let out = ccsgp(
        &[
            "run",
            "--config",
            "config.json",
            "--out",
            "only-st",
            "--methods",
            "st",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("only-st/results.csv")).unwrap();
    let rows: Vec<&str> = csv.trim().lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.contains(",st,")));
}

#[test]
fn failing_cells_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), ",\n\"operating_region\": [[1e7, 1e8]]");
    let out = ccsgp(
        &["run", "--config", "config.json", "--out", "bad"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cell failed"));
}

#[test]
fn unknown_method_override_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "");
    let out = ccsgp(
        &[
            "run",
            "--config",
            "config.json",
            "--methods",
            "bogus",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "clap rejects bad values with usage error");
}
