use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn eegfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eegfuse")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = eegfuse(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_store(dir: &Path) -> String {
    let store = dir.join("store");
    ok(&["synth", "--out", p(&store), "--subjects", "3", "--trials", "4", "--segments", "6", "--channels", "4", "--rate", "32"]);
    p(&store.join("manifest.json")).to_string()
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn evaluate_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_store(dir.path());
    let out = dir.path().join("eval");
    let table = ok(&["evaluate", "--manifest", &manifest, "--features", "psd", "--latent", "8", "--out", p(&out)]);
    assert!(table.contains("psd+hypergraph"));
    for f in ["report.csv", "report.json", "predictions.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let r = report(&out.join("report.json"));
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|row| row["status"] == "ok"));

    let json = ok(&["report", "--input", p(&out.join("report.json")), "--name", "psd", "--format", "json"]);
    let parsed: Value = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed[0]["name"], "psd");
    let predictions = std::fs::read_to_string(out.join("predictions.csv")).unwrap();
    assert_eq!(predictions.lines().count(), 1 + 72);
}

#[test]
fn train_extract_decode_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_store(dir.path());
    let (train, feats, dec) = (dir.path().join("train"), dir.path().join("feats"), dir.path().join("dec"));
    let common = ["--latent", "8", "--width", "2"];

    let mut args = vec!["train", "--manifest", &manifest, "--epochs", "2", "--batch-size", "16", "--exclude-subject", "s01", "--out", p(&train)];
    args.extend(common);
    ok(&args);
    let history = std::fs::read_to_string(train.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    assert!(train.join("checkpoint").is_dir());

    let ckpt = train.join("checkpoint");
    let mut args = vec!["extract", "--manifest", &manifest, "--checkpoint", p(&ckpt), "--out", p(&feats)];
    args.extend(common);
    ok(&args);
    let csv = std::fs::read_to_string(feats.join("features.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 72);

    let table = feats.join("features.csv");
    let mut args = vec!["decode", "--manifest", &manifest, "--features-file", p(&table), "--test-subject", "s01", "--out", p(&dec)];
    args.extend(common);
    let printed = ok(&args);
    assert!(printed.contains("s01"));
    assert!(dec.join("predictions.csv").exists());
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_store(dir.path());
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"decode": {"kappa": 3}, "seed": 9}"#).unwrap();
    let out = dir.path().join("eval");
    ok(&["evaluate", "--manifest", &manifest, "--features", "psd", "--latent", "8", "--kappa", "7", "--config", p(&cfg), "--out", p(&out)]);
    let r = report(&out.join("report.json"));
    assert_eq!(r["meta"]["kappa"], 3);
    assert_eq!(r["meta"]["seed"], 9);
}

#[test]
fn sweep_writes_one_report_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_store(dir.path());
    let out = dir.path().join("sweep");
    ok(&["sweep", "--manifest", &manifest, "--features", "psd", "--latent", "8", "--sweep-kappa", "2,4", "--out", p(&out)]);
    assert!(out.join("timing.csv").exists());
    let dirs: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(dirs.len(), 2, "{dirs:?}");
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_store(dir.path());
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"decode": {"kappa": 0}}"#).unwrap();
    let out = dir.path().join("x");
    let config_err = eegfuse(&["evaluate", "--manifest", &manifest, "--features", "psd", "--config", p(&bad), "--out", p(&out)]);
    assert_eq!(config_err.status.code(), Some(2));

    let missing = dir.path().join("nope.json");
    let io_err = eegfuse(&["evaluate", "--manifest", p(&missing), "--features", "psd", "--out", p(&out)]);
    assert_eq!(io_err.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&io_err.stderr).contains("nope.json"));
}
