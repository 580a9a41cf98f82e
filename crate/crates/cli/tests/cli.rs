use std::path::Path;
use std::process::Command;

use cpcr_cli::report::{read_report, Status};

fn cpcr(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cpcr"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn small_run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.json", r#"{"label": "tiny", "p": 60, "r": 3, "c_values": [2.0], "kappas": [0.9], "replicates": 2}"#);
    let out = dir.path().join("out");
    let res = cpcr(&["theory-vs-mc", "--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let run_dir = out.join("theory-vs-mc").join("tiny");
    for f in ["report.csv", "resolved_config.json", "figure_manifest.txt"] {
        assert!(run_dir.join(f).exists(), "{f} missing");
    }
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("resolved_config.json")).unwrap()).unwrap();
    assert_eq!(resolved["seed"], 3);
    assert_eq!(resolved["config"]["p"], 60);
    let rows = read_report(&run_dir.join("report.csv")).unwrap();
    assert!(rows.iter().all(|r| r.status() == Status::Ok));
    assert!(rows.iter().any(|r| r.metric == "theory_gap"));
    let text = std::fs::read_to_string(run_dir.join("report.csv")).unwrap();
    assert!(!text.contains("NaN") && !text.contains("inf"));
}

#[test]
fn unknown_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"replicats": 3}"#);
    let res = cpcr(&["method-compare", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("error"));
}

#[test]
fn invalid_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"kappas": [1.5]}"#);
    let res = cpcr(&["lambda-map", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let missing = cpcr(&["rank-sweep", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn missing_dataset_is_an_explicit_skip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "u.json",
        r#"{"datasets": [{"name": "gone", "path": "/nonexistent/gone.csv", "target": "y"}]}"#,
    );
    let out = dir.path().join("out");
    let res = cpcr(&["uci-bench", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let rows = read_report(&out.join("uci-bench").join("default").join("report.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].status(), Status::Skipped);
}

#[test]
fn single_replicate_leaves_standard_error_empty() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "m.json",
        r#"{"p": 60, "r": 3, "sweep": {"kind": "kappa", "values": [0.9]}, "replicates": 1}"#,
    );
    let out = dir.path().join("out");
    let res = cpcr(&["method-compare", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let rows = read_report(&out.join("method-compare").join("default").join("report.csv")).unwrap();
    let means: Vec<_> = rows.iter().filter(|r| r.metric == "mean_risk").collect();
    assert!(!means.is_empty());
    assert!(means.iter().all(|r| r.std_error.is_none() && r.value.is_some()));
}

#[test]
fn seeds_change_results_and_reruns_do_not() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "m.json", r#"{"p": 60, "r": 3, "sweep": {"kind": "kappa", "values": [0.8]}, "replicates": 2}"#);
    let report = |seed: &str, tag: &str| {
        let out = dir.path().join(tag);
        let res = cpcr(&["method-compare", "--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap(), "--workers", "1"]);
        assert_eq!(res.status.code(), Some(0));
        std::fs::read(out.join("method-compare").join("default").join("report.csv")).unwrap()
    };
    let a = report("1", "a");
    assert_eq!(a, report("1", "b"));
    assert_ne!(a, report("2", "c"));
}
