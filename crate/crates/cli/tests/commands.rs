mod common;

use std::fs;
use std::process::{Command, Output};

use breathnet_cli::lock::LOCK_NAME;
use common::Fixture;

fn breathnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_breathnet"))
        .args(args)
        .env("BREATHNET_LOG", "warn")
        .output()
        .unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no JSON in {stderr}"));
    serde_json::from_str(line).unwrap()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = breathnet(&["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    let e = error_json(&out);
    assert_eq!(e["error"], "usage");
    assert_eq!(e["exit_code"], 1);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "seed = 1\n[training]\nlearning_rate = 0.1\n").unwrap();
    let out = breathnet(&["--config", cfg.to_str().unwrap(), "config"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_json(&out)["message"].as_str().unwrap().contains("learning_rate"));
}

#[test]
fn missing_inputs_are_data_errors_with_a_hint() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("work");
    let w = work.to_str().unwrap();
    let out = breathnet(&["--workdir", w, "preprocess", "--manifest", dir.path().join("none.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "data");

    let out = breathnet(&["--workdir", w, "train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_json(&out)["message"].as_str().unwrap().contains("breathnet preprocess"));

    let out = breathnet(&["--workdir", w, "evaluate"]);
    assert_eq!(out.status.code(), Some(2));
    // the lock never outlives a failed command
    assert!(!work.join(LOCK_NAME).exists());
}

#[test]
fn a_held_lock_refuses_a_second_writer() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("work");
    fs::create_dir_all(&work).unwrap();
    fs::write(work.join(LOCK_NAME), "pid 1 command train\n").unwrap();
    let out = breathnet(&["--workdir", work.to_str().unwrap(), "report"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = error_json(&out)["message"].as_str().unwrap().to_string();
    assert!(msg.contains("locked") && msg.contains("command train"), "{msg}");
    // the report itself runs once the lock is gone
    fs::remove_file(work.join(LOCK_NAME)).unwrap();
    let out = breathnet(&["--workdir", work.to_str().unwrap(), "report"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(work.join("report/report.md").exists());
}

#[test]
fn diverging_training_is_a_numeric_failure() {
    let fx = Fixture::new(3);
    let (path, _) = fx.config("work", 2, false);
    let text = fs::read_to_string(&path).unwrap().replace("lr0 = 0.003", "lr0 = 1e30\nclip_norm = 1e30");
    fs::write(&path, text).unwrap();
    let p = path.to_str().unwrap();
    let out = breathnet(&["--config", p, "preprocess"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = breathnet(&["--config", p, "train"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(error_json(&out)["error"], "numeric");
}

#[test]
fn synth_and_config_commands_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let out = breathnet(&["synth", "--out", dir.path().join("d").to_str().unwrap(), "--clips-per-class", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("wrote 10 clips"));
    let out = breathnet(&["--seed", "7", "config"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("seed = 7"));
    assert!(text.contains("lr0 = 0.0003"));
}
