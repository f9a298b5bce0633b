use std::path::Path;
use std::process::{Command, Output};

fn quadspin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadspin")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.toml");
    let text = format!("schema_version = 1\n{extra}\n[sim]\nduration = 3.0\ntrim_seconds = 1.0\n");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let log = dir.path().join("a.csv");
    let log2 = dir.path().join("b.csv");
    for path in [&log, &log2] {
        let out = quadspin(&["simulate", "--config", &cfg, "--seed", "4", "--ablation", "fkm", "--out", path.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(std::fs::read(&log).unwrap(), std::fs::read(&log2).unwrap());

    let report = json(&quadspin(&["analyze", "--log", log.to_str().unwrap(), "--trim-seconds", "1"]));
    let m = &report["metrics"];
    assert!(m["circle"]["radius"].as_f64().unwrap() >= 0.0);
    assert!(m["samples"].as_u64().unwrap() > 1000);
    assert!(report["distance_trend"]["slope"].is_number());

    let out_file = dir.path().join("metrics.json");
    let out = quadspin(&["analyze", "--log", log.to_str().unwrap(), "--trim-seconds", "1", "--out", out_file.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_file).unwrap()).unwrap();
    assert_eq!(saved, report);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(code(&quadspin(&["simulate", "--config", missing.to_str().unwrap()])), 2);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "schema_version = 1\n[gait]\nduty = 2.0\n").unwrap();
    assert_eq!(code(&quadspin(&["simulate", "--config", bad.to_str().unwrap()])), 2);

    // too steep a staircase for the narrow stance: the plant reports a fall
    let cfg = write_config(dir.path(), "[terrain]\nkind = \"stairs\"\nstair_rise = 0.12\nstair_run = 0.3\n");
    let out = dir.path().join("fall.csv");
    assert_eq!(code(&quadspin(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()])), 3);

    let junk = dir.path().join("junk.csv");
    std::fs::write(&junk, "not,a,log\n1,2,3\n").unwrap();
    assert_eq!(code(&quadspin(&["analyze", "--log", junk.to_str().unwrap()])), 4);

    let cfg = write_config(dir.path(), "");
    let short = dir.path().join("short.csv");
    assert_eq!(code(&quadspin(&["simulate", "--config", &cfg, "--out", short.to_str().unwrap()])), 0);
    assert_eq!(code(&quadspin(&["analyze", "--log", short.to_str().unwrap(), "--trim-seconds", "10"])), 4);

    assert_eq!(code(&quadspin(&["sweep", "--config", &cfg, "--ablations", "asc,warp"])), 2);
    assert_eq!(code(&quadspin(&["kin", "--ik", "0,0,-2"])), 3);
}

#[test]
fn small_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let report = json(&quadspin(&["sweep", "--config", &cfg, "--seeds", "1..2", "--omega", "0.7,1.0"]));
    assert_eq!(report["cells"].as_array().unwrap().len(), 12);
    assert_eq!(report["aggregates"].as_array().unwrap().len(), 6);
    assert_eq!(report["ordering"].as_array().unwrap().len(), 2);
    assert_eq!(report["omega_trend"].as_array().unwrap().len(), 3);

    let empty = json(&quadspin(&["sweep", "--config", &cfg, "--ablations", ""]));
    assert!(empty["cells"].as_array().unwrap().is_empty());
}

#[test]
fn kinematics_queries() {
    let fk = json(&quadspin(&["kin", "--fk", "0.1,0.6,-1.3"]));
    let c: Vec<f64> = fk["ball_center"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let ik = json(&quadspin(&["kin", "--ik", &format!("{},{},{}", c[0], c[1], c[2])]));
    let a: Vec<f64> = ik["angles"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (got, want) in a.iter().zip([0.1, 0.6, -1.3]) {
        assert!((got - want).abs() < 1e-9, "{a:?}");
    }

    let i = &fk["ideal_foothold"];
    let target = format!("{},{},{}", i[0], i[1], i[2]);
    let corrected = json(&quadspin(&["kin", "--ik", &target, "--fkm"]));
    assert!(corrected["residual"].as_f64().unwrap() < 1e-7);
    let a = corrected["angles"].as_array().unwrap();
    assert!((a[2].as_f64().unwrap() + 1.3).abs() < 1e-7);
}

#[test]
fn lqr_gain_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = quadspin(&["lqr-gain", "--config", &cfg, "--heading", "0.5"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("K =") && text.contains("spectral radius"));
}
