//! End-to-end checks of the binary: JSON I/O, exit codes, determinism.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_predim"))
}

fn write_universe(dir: &tempfile::TempDir) -> PathBuf {
    let path = dir.path().join("u.json");
    std::fs::write(
        &path,
        r#"{
  "schema_version": 1,
  "id": "u0",
  "class_id": "EJ_TOY",
  "points": [
    {"id": "c0", "td_vector": [], "is_constant": true},
    {"id": "z1", "td_vector": ["1", "0"], "sl2_class": "s1"},
    {"id": "j1", "td_vector": ["0", "1"], "hecke_class": "h1"}
  ],
  "epairs": [{"z": "z1", "j": "j1"}]
}"#,
    )
    .unwrap();
    path
}

fn parse_stdout(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

#[test]
fn delta_reports_predimension() {
    let dir = tempfile::tempdir().unwrap();
    let u = write_universe(&dir);
    let out = bin().args(["delta", "--in"]).arg(&u).output().unwrap();
    assert!(out.status.success());
    let v = parse_stdout(&out);
    assert_eq!(v["result"]["td"], 2);
    assert_eq!(v["result"]["sigma"], 1);
    assert_eq!(v["result"]["delta"], 1);
}

#[test]
fn closure_of_lone_z_point() {
    let dir = tempfile::tempdir().unwrap();
    let u = write_universe(&dir);
    let out = bin()
        .args(["closure", "--points", "z1", "--in"])
        .arg(&u)
        .output()
        .unwrap();
    assert!(out.status.success());
    let v = parse_stdout(&out);
    assert_eq!(v["result"]["dimension"], 1);
}

#[test]
fn audit_passes_on_sound_universe() {
    let dir = tempfile::tempdir().unwrap();
    let u = write_universe(&dir);
    let out = bin()
        .args(["audit", "--expect-pass", "--in"])
        .arg(&u)
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn modular_poly_level_one() {
    let out = bin().args(["modular-poly", "1"]).output().unwrap();
    assert!(out.status.success());
    let v = parse_stdout(&out);
    assert_eq!(v["result"]["text"], "X - Y");
}

#[test]
fn verify_single_identity() {
    let out = bin()
        .args(["verify-identities", "--only", "MOBIUS_ZERO", "--jet-checks", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v = parse_stdout(&out);
    assert_eq!(v["result"][0]["holds"], true);
}

#[test]
fn check_variety_expectation_mismatch_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.json");
    std::fs::write(
        &path,
        r#"{"params": 2, "mode": "PLAIN", "components": ["t0", "t1", "(+ t0 t1)", "(+ t0 t1)"]}"#,
    )
    .unwrap();
    // y2 = y1 is not free: expecting `free` must exit 1.
    let out = bin()
        .args(["check-variety", "--free", "--expect", "free", "--in"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let v = parse_stdout(&out);
    assert_eq!(v["ok"], false);
    // Without the expectation the command succeeds and reports not-free.
    let out = bin()
        .args(["check-variety", "--free", "--in"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn unknown_input_exits_two() {
    let out = bin()
        .args(["delta", "--in", "/nonexistent/u.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_universe_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"class_id": "EJ_TOY", "points": [{"id": "a"}, {"id": "a"}]}"#)
        .unwrap();
    let out = bin().args(["delta", "--in"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reports_are_byte_identical_for_fixed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let u = write_universe(&dir);
    let run = || {
        bin()
            .args(["fullify", "--seed", "9", "--in"])
            .arg(&u)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run(), run());
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let u = write_universe(&dir);
    let report = dir.path().join("report.json");
    let out = bin()
        .args(["delta", "--in"])
        .arg(&u)
        .arg("--out")
        .arg(&report)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["result"]["delta"], 1);
}

#[test]
fn limit_builder_round_trips() {
    let out = bin()
        .args(["limit", "--cap", "2", "--rounds", "3", "--seed", "5"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v = parse_stdout(&out);
    assert_eq!(v["result"]["audit"]["pending"].as_array().unwrap().len(), 0);
}
