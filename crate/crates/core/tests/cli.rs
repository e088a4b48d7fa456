use std::path::Path;
use std::process::{Command, Output};

use limi::cli::{ExperimentConfig, EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_PARTIAL};

fn limi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_limi")).args(args).output().unwrap()
}

fn code(o: &Output) -> u8 {
    o.status.code().unwrap() as u8
}

#[test]
fn show_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "seeds = [7]\n[train]\nbatch_size = 16\n").unwrap();
    let o = limi(&["--config", cfg.to_str().unwrap(), "show-config"]);
    assert_eq!(code(&o), EXIT_OK);
    let text = String::from_utf8(o.stdout).unwrap();
    let back = ExperimentConfig::from_toml(&text, Path::new("stdout")).unwrap();
    assert_eq!(back.seeds, vec![7]);
    assert_eq!(back.train.batch_size, 16);
    assert_eq!(back.to_canonical(), text);
}

#[test]
fn seed_flag_overrides() {
    let o = limi(&["--seed", "42", "show-config"]);
    let text = String::from_utf8(o.stdout).unwrap();
    let back = ExperimentConfig::from_toml(&text, Path::new("stdout")).unwrap();
    assert_eq!(back.seeds, vec![42]);
    assert_eq!(back.gaussian.seed, 42);
}

#[test]
fn unknown_key_is_config_error_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "[train]\nbatch_sise = 8\n").unwrap();
    let o = limi(&["--config", cfg.to_str().unwrap(), "show-config"]);
    assert_eq!(code(&o), EXIT_CONFIG);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("exp.toml:2:"), "{err}");
}

#[test]
fn unknown_arm_is_config_error() {
    let o = limi(&["--arm", "local-mi-foo-tuned", "show-config"]);
    assert_eq!(code(&o), EXIT_CONFIG);
}

#[test]
fn missing_config_is_config_error() {
    let o = limi(&["--config", "/nonexistent/exp.toml", "show-config"]);
    assert_eq!(code(&o), EXIT_CONFIG);
}

#[test]
fn unwritable_output_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "seeds = [0]\nn_train = 8\nn_test = 8\nn_labeled = 8\n").unwrap();
    let o = limi(&["--config", cfg.to_str().unwrap(), "--out", blocker.to_str().unwrap(), "gen-data"]);
    assert_eq!(code(&o), EXIT_IO);
}

#[test]
fn report_on_empty_dir_is_partial() {
    let dir = tempfile::tempdir().unwrap();
    let o = limi(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_PARTIAL);
    assert!(String::from_utf8(o.stderr).unwrap().contains("0 completed runs"));
}
