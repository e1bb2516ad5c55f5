//! End-to-end checks of the binary: exit codes, produced files, and the
//! chained single-seed commands. Configs are built through the library and
//! written as TOML so the file always matches the current schema.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sfadapt_core::harness::ExperimentConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sfadapt"))
}

fn tiny_config(dir: &Path) -> PathBuf {
    let mut cfg = ExperimentConfig {
        label: "tiny".to_string(),
        seeds: vec![0],
        output_dir: dir.join("runs").to_string_lossy().into_owned(),
        ..ExperimentConfig::default()
    };
    cfg.shift.num_classes = 3;
    cfg.shift.samples_per_domain = 120;
    cfg.model.hidden = vec![8];
    cfg.model.feature_dim = 6;
    cfg.source.epochs = 8;
    cfg.source.batch_size = 32;
    cfg.proxy.samples_per_class = 5;
    cfg.pseudo.neighbors = 4;
    cfg.adapt.epochs = 3;
    cfg.adapt.batch_size = 16;
    let path = dir.join("tiny.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn run_produces_record_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = dir.path().join("report");
    let output = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--seeds", "0"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    for file in [
        "records.jsonl",
        "summary.csv",
        "proxy_purity.csv",
        "accuracy_trace.csv",
    ] {
        assert!(out.join(file).is_file(), "missing {file}");
    }
    let line = stdout(&output);
    assert!(line.contains("tiny") && line.contains("adapted"), "summary line: {line}");
    assert_eq!(line.trim().lines().count(), 1, "one-line summary expected");
}

#[test]
fn ablate_selector_dimension_yields_three_records() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = dir.path().join("ablation");
    let output = bin()
        .args(["ablate", "--config"])
        .arg(&config)
        .args(["--dimension", "selector", "--seeds", "0"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    let records = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 3, "one record per selector");
    assert!(stdout(&output).contains("3 ablation cells"));
}

#[test]
fn chained_single_seed_commands() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let data_dir = dir.path().join("data");
    let ckpt = dir.path().join("source.ckpt");
    let proxy_csv = dir.path().join("proxy.csv");
    let adapted = dir.path().join("adapted.ckpt");

    let output = bin()
        .args(["gen-data", "--config"])
        .arg(&config)
        .args(["--seed", "0"])
        .arg("--out")
        .arg(&data_dir)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    for file in ["source.csv", "target_train.csv", "target_test.csv"] {
        assert!(data_dir.join(file).is_file(), "missing {file}");
    }

    let output = bin()
        .args(["train-source", "--config"])
        .arg(&config)
        .args(["--seed", "0"])
        .arg("--out")
        .arg(&ckpt)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    assert!(ckpt.is_file());

    let output = bin()
        .args(["build-proxy", "--config"])
        .arg(&config)
        .args(["--seed", "0", "--model"])
        .arg(&ckpt)
        .arg("--out")
        .arg(&proxy_csv)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    let proxy = std::fs::read_to_string(&proxy_csv).unwrap();
    // Header plus 5 picks for each of 3 classes.
    assert_eq!(proxy.lines().count(), 16, "proxy csv rows");
    assert!(stdout(&output).contains("purity"));

    let output = bin()
        .args(["adapt", "--config"])
        .arg(&config)
        .args(["--seed", "0", "--model"])
        .arg(&ckpt)
        .arg("--out")
        .arg(&adapted)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    assert!(adapted.is_file());
    assert!(stdout(&output).contains("test"));
}

#[test]
fn report_rebuilds_from_records() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let first = dir.path().join("first");
    let output = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&first)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));

    let rebuilt = dir.path().join("rebuilt");
    let output = bin()
        .args(["report", "--records"])
        .arg(first.join("records.jsonl"))
        .arg("--out")
        .arg(&rebuilt)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    assert_eq!(
        std::fs::read_to_string(first.join("summary.csv")).unwrap(),
        std::fs::read_to_string(rebuilt.join("summary.csv")).unwrap(),
        "report must reproduce the summary exactly"
    );
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());

    let output = bin().arg("frobnicate").output().unwrap();
    assert_eq!(output.status.code(), Some(2), "unknown subcommand");

    let output = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--frobnicate")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "unknown flag");

    let output = bin()
        .args(["run", "--config", "/nonexistent/nowhere.toml"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "missing config file");
    assert!(stderr(&output).contains("not found"));

    let output = bin().arg("run").output().unwrap();
    assert_eq!(output.status.code(), Some(2), "missing required flag");
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig {
        label: "broken".to_string(),
        seeds: vec![0],
        output_dir: dir.path().join("runs").to_string_lossy().into_owned(),
        ..ExperimentConfig::default()
    };
    cfg.shift.num_classes = 3;
    cfg.shift.samples_per_domain = 30;
    // More picks per class than target samples exist: every seed fails.
    cfg.proxy.samples_per_class = 1000;
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();

    let output = bin()
        .args(["run", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "stderr: {}", stderr(&output));
    assert!(stderr(&output).contains("error"));
}
