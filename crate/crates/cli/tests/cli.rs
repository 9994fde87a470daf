use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hall-edge-lab"))
        .args(args)
        .env_remove("HALL_EDGE_LAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn unknown_key_is_rejected_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"task": "chern", "model": {"t1": 1.0, "tee2": 0.5}}"#).unwrap();
    let out = lab(&["--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("tee2"), "{err}");
}

#[test]
fn unknown_task_section_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"task": "transport", "transport": {"betta": 10}}"#).unwrap();
    let out = lab(&["--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("betta"));
}

#[test]
fn validation_and_numerical_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    // L below the Haldane minimum
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"task": "edge", "model": {"L": 2}}"#).unwrap();
    let out = lab(&["--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("InvalidParameter"));
    // mu inside the bulk band
    let cfg = dir.path().join("nogap.json");
    std::fs::write(&cfg, r#"{"task": "chern", "model": {"mu": 2.0}}"#).unwrap();
    let out = lab(&["--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn override_for_wrong_task_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["--task", "chern", "--lambda", "0.3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn chern_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(lab(&["--task", "chern", "--out", a.to_str().unwrap()]).status.success());
    assert!(lab(&["--task", "chern", "--out", b.to_str().unwrap()]).status.success());
    let fa = std::fs::read(a.join("chern.json")).unwrap();
    let fb = std::fs::read(b.join("chern.json")).unwrap();
    assert_eq!(fa, fb);
    let v: Value = serde_json::from_slice(&fa).unwrap();
    assert_eq!(v["result"]["C_per_spin"], serde_json::json!([-1, -1]));
}

#[test]
fn worker_count_changes_only_roundoff() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"task": "ward", "model": {"L": 12}}"#).unwrap();
    let c = cfg.to_str().unwrap();
    assert!(lab(&["--config", c, "--workers", "1", "--out", a.to_str().unwrap()]).status.success());
    assert!(lab(&["--config", c, "--workers", "3", "--out", b.to_str().unwrap()]).status.success());
    let ja = read_json(&a.join("ward.json"));
    let jb = read_json(&b.join("ward.json"));
    // bit-identity is promised at fixed worker count only
    let ra = ja["result"]["residuals"].as_array().unwrap();
    let rb = jb["result"]["residuals"].as_array().unwrap();
    assert_eq!(ra.len(), 20);
    for (x, y) in ra.iter().zip(rb) {
        assert_eq!(x["eta_beta"], y["eta_beta"]);
        assert_eq!(x["p1"], y["p1"]);
        let (sx, sy) = (x["scale"].as_f64().unwrap(), y["scale"].as_f64().unwrap());
        assert!((sx - sy).abs() <= 1e-12 * sx.abs().max(1e-300));
    }
    assert_eq!(ja["meta"]["config_hash"], jb["meta"]["config_hash"]);
    assert_eq!(jb["meta"]["workers"], 3);
}

#[test]
fn config_round_trips_through_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let out = lab(&["--task", "refmodel", "--seed", "7", "--out", a.to_str().unwrap()]);
    assert!(out.status.success());
    let first = read_json(&a.join("refmodel.json"));
    let cfg = dir.path().join("again.json");
    std::fs::write(&cfg, serde_json::to_string(&first["meta"]["config"]).unwrap()).unwrap();
    let b = dir.path().join("b");
    assert!(lab(&["--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]).status.success());
    let second = read_json(&b.join("refmodel.json"));
    assert_eq!(first["meta"]["config_hash"], second["meta"]["config_hash"]);
    assert_eq!(
        std::fs::read(a.join("refmodel.json")).unwrap(),
        std::fs::read(b.join("refmodel.json")).unwrap()
    );
}

#[test]
fn csv_carries_metadata_header() {
    let dir = tempfile::tempdir().unwrap();
    assert!(lab(&["--task", "rgtrees", "--out", dir.path().to_str().unwrap()]).status.success());
    let text = std::fs::read_to_string(dir.path().join("rgtrees.csv")).unwrap();
    let mut lines = text.lines();
    let head = lines.next().unwrap();
    assert!(head.starts_with("# version=") && head.contains("task=rgtrees") && head.contains("config_hash="));
    assert_eq!(lines.next().unwrap(), "index,parents,scales");
    let j = read_json(&dir.path().join("rgtrees.json"));
    // n = 3: three shapes, h_root = -4
    assert_eq!(j["result"]["census"]["unlabeled"], 3);
    assert_eq!(j["result"]["renormalized_below_one"], serde_json::json!([{"psi": 2, "phi": 2, "a": 0}]));
}

#[test]
fn ed_check_reports_small_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["--task", "ed-check", "--lambda", "0.3", "--geometry", "2x3", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let j = read_json(&dir.path().join("ed_check.json"));
    let r = &j["result"];
    assert_eq!(r["lambda"], 0.3);
    assert!(r["max_ward_relative"].as_f64().unwrap() <= 1e-10);
    assert!(r["free_oracle"]["max_bubble_relative"].as_f64().unwrap() <= 1e-8);
    assert!(r["free_oracle"]["max_schwinger_relative"].as_f64().unwrap() <= 1e-8);
    // 2 x 3 x 2 modes
    assert_eq!(j["meta"]["grids"]["modes"], 12);
}

#[test]
fn ed_check_rejects_oversized_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["--task", "ed-check", "--geometry", "3x3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("TooLarge"));
    let out = lab(&["--task", "ed-check", "--geometry", "2by3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bands_closed_form_agrees() {
    let dir = tempfile::tempdir().unwrap();
    assert!(lab(&["--task", "bands", "--out", dir.path().to_str().unwrap()]).status.success());
    let j = read_json(&dir.path().join("bands.json"));
    assert!(j["result"]["closed_form_max_deviation"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn chern_phase_sweep_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    // W / (t2 sin phi) from 0 to 8 in steps of 1; transition at 3 sqrt 3 ~ 5.2
    std::fs::write(
        &cfg,
        r#"{"task": "chern", "model": {"spinful": false}, "chern": {"grid": 24, "sweep": {"start": 0.0, "stop": 8.0, "step": 1.0}}}"#,
    )
    .unwrap();
    assert!(lab(&["--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]).status.success());
    let text = std::fs::read_to_string(dir.path().join("o/phase.csv")).unwrap();
    let cs: Vec<String> = text.lines().skip(2).map(|l| l.rsplit(',').next().unwrap().to_string()).collect();
    assert_eq!(cs.len(), 9);
    assert!(cs[..5].iter().all(|c| c == &cs[0]) && cs[0] != "0");
    assert!(cs[6..].iter().all(|c| c == "0"));
}
