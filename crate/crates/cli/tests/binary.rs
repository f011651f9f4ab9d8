use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn u1sym(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_u1sym"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn help_and_version_exit_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let help = u1sym(tmp.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("analyze"));
    assert_eq!(u1sym(tmp.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = u1sym(tmp.path(), &["frobnicate"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(!bad.stderr.is_empty());
    assert_eq!(
        u1sym(tmp.path(), &["train", "--epochs", "0"]).status.code(),
        Some(1)
    );
}

#[test]
fn missing_input_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let r = u1sym(
        tmp.path(),
        &["ingest", "--manifest", "/nonexistent/manifest.jsonl"],
    );
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn divergence_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let r = u1sym(
        tmp.path(),
        &[
            "train",
            "--epochs",
            "3",
            "--lr",
            "1e300",
            "--per-class",
            "5",
        ],
    );
    assert_eq!(
        r.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
}

#[test]
fn config_echo_precedes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let r = u1sym(
        tmp.path(),
        &["--deterministic", "labels", "--n-classes", "4"],
    );
    assert_eq!(r.status.code(), Some(0));
    let echo: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["tool"], "u1sym");
    assert_eq!(echo["config"]["deterministic"], true);
    let labels: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(fs::read(tmp.path().join("labels.json")).unwrap(), r.stdout);
    assert!(labels.to_string().contains("unit_circle"));
}

#[test]
fn synth_then_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let s = u1sym(
        &data,
        &[
            "synth",
            "--classes",
            "2",
            "--per-class",
            "4",
            "--height",
            "3",
            "--width",
            "3",
            "--channels",
            "8",
        ],
    );
    assert_eq!(s.status.code(), Some(0));
    let manifest = data.join("manifest.jsonl");
    let ingest = u1sym(
        &tmp.path().join("ingest"),
        &["ingest", "--manifest", manifest.to_str().unwrap()],
    );
    assert_eq!(ingest.status.code(), Some(0));
    let eval_dir = tmp.path().join("eval");
    let e = u1sym(
        &eval_dir,
        &["eval", "--manifest", manifest.to_str().unwrap(), "--exact"],
    );
    assert_eq!(
        e.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&e.stderr)
    );
    let summary: serde_json::Value = serde_json::from_slice(&e.stdout).unwrap();
    assert_eq!(summary["queries"], 8);
    let csv = fs::read_to_string(eval_dir.join("predictions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
}
