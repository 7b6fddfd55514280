use std::fs;

use assert_cmd::Command;
use predicates::str::contains;

fn fvpbe() -> Command {
    Command::cargo_bin("fvpbe").unwrap()
}

fn stdout(args: &[&str]) -> String {
    let out = fvpbe().args(args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn verify_passes_on_a_clean_build() {
    let out = fvpbe().args(["verify", "--format", "json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["config"]["command"], "verify");
    let checks = doc["result"]["checks"].as_array().unwrap();
    assert!(checks.len() >= 10);
    assert!(checks.iter().all(|c| c["passed"] == true));
}

#[test]
fn run_conserves_mass_in_the_trajectory_csv() {
    let csv = stdout(&["run", "--case", "brk_binary_linear", "--cells", "240", "--t-end", "100", "--format", "csv"]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,m0,m1,outflow"));
    let m1: Vec<f64> = lines.map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(m1.len() > 2);
    for m in &m1 {
        assert!((m - m1[0]).abs() <= 1e-12 * m1[0], "{m} vs {}", m1[0]);
    }
}

#[test]
fn usage_errors_exit_2_and_name_the_key() {
    fvpbe().args(["run", "--case", ""]).assert().code(2);
    fvpbe().args(["eoc", "--sigma", "-1"]).assert().code(2).stderr(contains("sigma"));
    fvpbe().args(["tables", "--which", "9z"]).assert().code(2).stderr(contains("which"));
    fvpbe().assert().code(2).stderr(contains("command"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"command": "eoc", "level": 3}"#).unwrap();
    fvpbe()
        .args(["--config", path.to_str().unwrap()])
        .assert()
        .code(2)
        .stderr(contains("level"));
}

#[test]
fn divergence_exits_3() {
    fvpbe()
        .args(["run", "--case", "agg_product", "--method", "euler", "--dt", "50", "--t-end", "1000"])
        .assert()
        .code(3);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(&path, r#"{"command": "eoc", "case": "brk_ziff", "mesh": "geometric", "levels": 2, "cells": 20}"#).unwrap();
    let out = stdout(&["--config", path.to_str().unwrap(), "--cells", "16", "--format", "json"]);
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["config"]["cells"], 16);
    assert_eq!(doc["config"]["case"], "brk_ziff");
    let rows = doc["result"]["rows"].as_array().unwrap();
    assert_eq!(rows[0]["cells"], 16);
    assert_eq!(rows[1]["cells"], 32);
}

#[test]
fn tables_match_the_equivalent_eoc_study() {
    let table = stdout(&["tables", "--which", "2a", "--format", "csv", "--threads", "1"]);
    let eoc = stdout(&[
        "eoc", "--case", "brk_binary_linear", "--mesh", "uniform", "--cells", "60", "--levels", "4", "--format", "csv",
        "--threads", "1",
    ]);
    // table,family,case,I,error,eoc,ref_error,ref_eoc  vs  family,case,I,error,eoc
    let from_table: Vec<String> = table
        .lines()
        .skip(1)
        .filter(|l| l.contains("brk_binary_linear"))
        .map(|l| l.split(',').skip(1).take(5).collect::<Vec<_>>().join(","))
        .collect();
    let from_eoc: Vec<String> = eoc.lines().skip(1).map(str::to_string).collect();
    assert_eq!(from_table, from_eoc);
}

#[test]
fn table_1a_lists_the_reference_eocs() {
    let out = stdout(&["tables", "--which", "1a", "--format", "json"]);
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    let col = &doc["result"][0]["columns"][0];
    assert_eq!(col["reference"]["eocs"], serde_json::json!([1.95, 1.93, 1.94]));
    assert_eq!(col["report"]["rows"].as_array().unwrap().len(), 4);
    assert!(col["within_tolerance"].is_boolean());
}

#[test]
fn single_threaded_artifacts_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let files = ["eoc.csv", "eoc.json", "config.json"];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let status = fvpbe()
            .args(["eoc", "--case", "agg_product", "--mesh", "random", "--cells", "20", "--levels", "3"])
            .args(["--replicas", "3", "--threads", "1", "--out", dir.path().to_str().unwrap()])
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        runs.push(files.map(|f| fs::read(dir.path().join(f)).unwrap()));
    }
    for (file, (x, y)) in files.iter().zip(runs[0].iter().zip(&runs[1])) {
        assert!(!x.is_empty());
        assert_eq!(x, y, "{file} differs");
    }
    let cfg = fs::read_to_string(dir.path().join("config.json")).unwrap();
    assert!(cfg.contains("\"threads\": 1"));
}
