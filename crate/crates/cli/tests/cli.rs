use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

use sparsepot_cli::{OutputDigest, RunManifest, MANIFEST_FILE, OUT_DIR_ENV};

const CALOGERO: &str = r#"{"kind": "calogero", "seed": 5, "trials": 24, "cells": 400}"#;

const STAIRCASE: &str = r#"{
  "kind": "count-negative", "seed": 1,
  "lattice": {"dimension": 3, "radius": 6, "boundaryMode": "dirichlet-box"},
  "build": {"size": 4, "cap": 1.0},
  "schedule": {"power": 0.6666666666666666},
  "alphas": {"type": "thresholds", "count": 12, "below": 0.5, "above": 2.0}
}"#;

fn sparsepot(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparsepot"))
        .args(args)
        .current_dir(dir)
        .env_remove(OUT_DIR_ENV)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap()
}

#[test]
fn malformed_configs_exit_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("syntax.json", "{\"kind\": \"calogero\", \"seed\": "),
        ("noseed.json", r#"{"kind": "calogero"}"#),
        ("unknown.json", r#"{"kind": "calogero", "seed": 1, "trails": 3}"#),
        ("kind.json", r#"{"kind": "nonsense", "seed": 1}"#),
        ("radius.json", r#"{"kind": "dimension", "seed": 1, "lattice": {"dimension": 3, "radius": 0, "boundaryMode": "dirichlet-box"}, "tMin": 1, "tMax": 2, "samples": 3}"#),
    ];
    for (name, text) in cases {
        let config = write_config(tmp.path(), name, text);
        let out = tmp.path().join(format!("out-{name}"));
        let result = sparsepot(&["run", &config, "--out-dir", out.to_str().unwrap()], tmp.path());
        assert_eq!(result.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&result.stderr));
        assert!(!out.exists(), "{name} wrote outputs");
    }
    let missing = sparsepot(&["run", "absent.json", "--out-dir", "x"], tmp.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn reruns_reproduce_digests_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "calogero.json", CALOGERO);
    let mut manifests = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(format!("run{threads}"));
        let result = sparsepot(&["run", &config, "--out-dir", out.to_str().unwrap(), "--threads", threads], tmp.path());
        assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
        manifests.push(manifest(&out));
    }
    assert_eq!(manifests[0].outputs, manifests[1].outputs);
    assert_eq!(manifests[0].config_hash, manifests[1].config_hash);
    assert_eq!(manifests[0].exit_code, 0);

    // a different seed changes the random trials
    let out = tmp.path().join("reseeded");
    let result = sparsepot(&["run", &config, "--out-dir", out.to_str().unwrap(), "--seed", "6"], tmp.path());
    assert!(result.status.success());
    let reseeded = manifest(&out);
    assert_eq!(reseeded.seed, 6);
    assert_ne!(reseeded.outputs, manifests[0].outputs);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "calogero.json", CALOGERO);
    let target = tmp.path().join("from-env");
    let result = Command::new(env!("CARGO_BIN_EXE_sparsepot"))
        .args(["run", &config])
        .current_dir(tmp.path())
        .env(OUT_DIR_ENV, &target)
        .output()
        .unwrap();
    assert!(result.status.success());
    assert!(target.join(MANIFEST_FILE).exists());
    assert!(target.join("calogero.csv").exists());
}

#[test]
fn reports_in_every_format() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "staircase.json", STAIRCASE);
    let out = tmp.path().join("run");
    let result = sparsepot(&["run", &config, "--out-dir", out.to_str().unwrap()], tmp.path());
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let m = out.join(MANIFEST_FILE);
    for (format, ext) in [("csv", "csv"), ("json", "json"), ("gnuplot", "dat")] {
        let r = sparsepot(&["report", m.to_str().unwrap(), "--format", format], tmp.path());
        assert!(r.status.success(), "{format}: {}", String::from_utf8_lossy(&r.stderr));
        let text = fs::read_to_string(out.join("report").join(format!("staircase.{ext}"))).unwrap();
        assert!(text.contains("n_minus"), "{format}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report/staircase.json")).unwrap()).unwrap();
    assert!(json.is_object());

    let bad = sparsepot(&["report", m.to_str().unwrap(), "--format", "xml"], tmp.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn report_rejects_edited_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "calogero.json", CALOGERO);
    let out = tmp.path().join("run");
    assert!(sparsepot(&["run", &config, "--out-dir", out.to_str().unwrap()], tmp.path()).status.success());
    let table = out.join("calogero.csv");
    let text = fs::read_to_string(&table).unwrap() + "\n";
    fs::write(&table, text).unwrap();
    let r = sparsepot(&["report", out.join(MANIFEST_FILE).to_str().unwrap()], tmp.path());
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn report_flags_a_decreasing_staircase() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "alpha,n_minus,warning\n0.5,1,\n1.0,3,\n2.0,2,\n";
    fs::write(tmp.path().join("staircase.csv"), body).unwrap();
    let m = RunManifest {
        kind: "count-negative".into(),
        config_hash: String::new(),
        seed: 0,
        versions: BTreeMap::new(),
        c_norm: None,
        box_radii: vec![],
        elapsed_seconds: 0.0,
        outputs: vec![OutputDigest { file: "staircase.csv".into(), sha256: hex::encode(Sha256::digest(body)) }],
        exit_code: 0,
        message: None,
    };
    let path = tmp.path().join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
    let r = sparsepot(&["report", path.to_str().unwrap()], tmp.path());
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn unreachable_planar_set_exits_3_with_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "z2.json",
        r#"{"kind": "sparse-build", "seed": 1, "host": {"type": "z2"}, "build": {"size": 16, "cap": 1.0}}"#,
    );
    let out = tmp.path().join("run");
    let result = sparsepot(&["run", &config, "--out-dir", out.to_str().unwrap()], tmp.path());
    assert_eq!(result.status.code(), Some(3), "{}", String::from_utf8_lossy(&result.stderr));
    let m = manifest(&out);
    assert_eq!(m.exit_code, 3);
    assert!(m.message.is_some());
    assert!(m.c_norm.is_some_and(|c| (c - 4.0).abs() < 1e-9));
    assert!(out.join("sparse_set.csv").exists() && out.join("sparse_set.json").exists());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let config = sparsepot_cli::ExperimentConfig::from_json(&text, None)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        config.validate().unwrap();
        seen += 1;
    }
    assert!(seen >= 10);
}
