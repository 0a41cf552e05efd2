use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

use difflab::scenario::{run_scenario, sha256_hex, validate_config, Suite};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn difflab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_difflab"))
        .args(args)
        .env_remove("DIFFLAB_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let cfg = scenario("smoke.json");
    for dir in [&a, &b] {
        let out = difflab(&["run", cfg.to_str().unwrap(), "--output-dir", dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (ca, cb) = (csvs(a.path()), csvs(b.path()));
    assert_eq!(ca.len(), 7);
    assert_eq!(ca, cb);
    assert_eq!(
        fs::read(a.path().join("boundary_class.json")).unwrap(),
        fs::read(b.path().join("boundary_class.json")).unwrap()
    );
}

#[test]
fn manifest_hashes_match_and_replay_reproduces() {
    let first = TempDir::new().unwrap();
    let cfg = scenario("smoke.json");
    let out = difflab(&["run", cfg.to_str().unwrap(), "--output-dir", first.path().to_str().unwrap()]);
    assert!(out.status.success());
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(first.path().join("manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_object().unwrap();
    assert!(files.contains_key("mosco_report.csv"));
    for (name, hash) in files {
        assert_eq!(sha256_hex(&fs::read(first.path().join(name)).unwrap()), hash.as_str().unwrap(), "{name}");
    }
    assert_eq!(manifest["seed"], json!(5));

    let replay = TempDir::new().unwrap();
    let m = first.path().join("manifest.json");
    let out = difflab(&["run", m.to_str().unwrap(), "--output-dir", replay.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csvs(first.path()), csvs(replay.path()));
}

#[test]
fn seed_flag_overrides_config() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let cfg = scenario("smoke.json");
    let cfg = cfg.to_str().unwrap();
    difflab(&["weakconv", cfg, "--output-dir", a.path().to_str().unwrap()]);
    difflab(&["weakconv", cfg, "--seed", "6", "--output-dir", b.path().to_str().unwrap()]);
    let fdd_a = fs::read(a.path().join("fdd_report.csv")).unwrap();
    let fdd_b = fs::read(b.path().join("fdd_report.csv")).unwrap();
    assert_ne!(fdd_a, fdd_b);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(b.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], json!(6));
    assert_eq!(manifest["inputs"]["mc"]["seed"], json!(6));
}

#[test]
fn output_dir_from_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = scenario("smoke.json");
    let out = Command::new(env!("CARGO_BIN_EXE_difflab"))
        .args(["mosco", cfg.to_str().unwrap()])
        .env("DIFFLAB_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("mosco_report.csv").exists());
    assert!(dir.path().join("boundary_class.json").exists());
    assert!(!dir.path().join("fdd_report.csv").exists());
}

#[test]
fn invalid_configs_exit_with_code_3_and_field_path() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        json!({
            "domain": {"a": 0.0, "b": 1.0},
            "scale": {"kind": "identity"},
            "speed": {"kind": "uniform", "density": 1.0},
            "family": {"kind": "example26", "K": 8, "n_list": [1, 2]},
            "grid_N": 2
        })
        .to_string(),
    )
    .unwrap();
    let out = difflab(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid_N"));

    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(difflab(&["run", bad.to_str().unwrap()]).status.code(), Some(3));

    let missing = dir.path().join("nope.json");
    assert_eq!(difflab(&["run", missing.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn paths_needs_mc_block() {
    let out = difflab(&["paths", scenario("example26.json").to_str().unwrap(), "--output-dir", "/tmp/unused-difflab"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn paths_writes_samples_with_headers() {
    let dir = TempDir::new().unwrap();
    let out = difflab(&[
        "paths",
        scenario("smoke.json").to_str().unwrap(),
        "--sample",
        "4",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("paths_n1.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("path_id,t,state_value"));
    let ids: std::collections::BTreeSet<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids.len(), 4);
    let header: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("paths_n1.json")).unwrap()).unwrap();
    assert_eq!(header["seed"], json!(6));
}

#[test]
fn validate_prints_filled_defaults() {
    let out = difflab(&["validate", scenario("example26.json").to_str().unwrap()]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["dictionary"], json!("standard"));
    assert_eq!(v["base_point"], json!(0.5));
    assert_eq!(v["direction"], json!("decreasing"));
}

#[test]
fn every_csv_has_a_header_and_a_manifest_entry() {
    let dir = TempDir::new().unwrap();
    let raw: Value = serde_json::from_str(&fs::read_to_string(scenario("smoke.json")).unwrap()).unwrap();
    let sc = validate_config(&raw).unwrap();
    let outcome = run_scenario(&sc, &Suite::ALL, dir.path(), "test").unwrap();
    let names: Vec<&str> = outcome.files.iter().map(|(n, _)| n.as_str()).collect();
    for (name, body) in csvs(dir.path()) {
        assert!(names.contains(&name.as_str()), "{name} missing from manifest");
        let first = String::from_utf8(body).unwrap().lines().next().unwrap().to_string();
        assert!(first.split(',').all(|c| c.chars().next().is_some_and(|ch| ch.is_ascii_alphabetic())), "{first}");
    }
}

#[test]
fn golden_increasing_scenario_is_monotone() {
    let dir = TempDir::new().unwrap();
    let out = difflab(&[
        "mosco",
        scenario("removed_interval_increasing.json").to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("mosco_report.csv")).unwrap();
    assert!(csv.lines().last().unwrap().contains("monotone_ok=true"));
}

#[test]
fn golden_example26_freeze_is_reported() {
    let dir = TempDir::new().unwrap();
    let out =
        difflab(&["mosco", scenario("example26.json").to_str().unwrap(), "--output-dir", dir.path().to_str().unwrap()]);
    // the freeze gate fails on a bounded window: distances climb toward the distance to the mean
    assert_eq!(out.status.code(), Some(2));
    let csv = fs::read_to_string(dir.path().join("freeze_check.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "n,t,distance");
    assert_eq!(rows.len(), 1 + 6 + 1);
    assert!(rows.last().unwrap().starts_with("summary,"));
}
