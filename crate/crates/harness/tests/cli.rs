use std::path::Path;
use std::process::{Command, Output};

fn vortexmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vortexmf")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_noise_writes_report_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("noise.csv");
    let out = dir.path().join("out");
    let o = vortexmf(&["validate-noise", "--cutoff", "16", "--points", "10", "--report", path(&report), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let body = std::fs::read_to_string(&report).unwrap();
    assert!(body.starts_with("check,profile,cutoff"));
    assert!(body.contains("isotropy"));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("N,R,seed,build,metric,value,threshold,pass"));
    assert!(!summary.contains(",false"));
    assert!(out.join("run_info.json").exists());
}

#[test]
fn solve_emits_reference_modes_and_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"experiment": {"kind": "solve", "seed": 2, "t_final": 0.01, "records": 2, "pde": {"n": 32, "dt": 0.001}}}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = vortexmf(&["solve", "--config", path(&cfg), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let body = std::fs::read_to_string(out.join("pde_modes.csv")).unwrap();
    let mut lines = body.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("N,R,seed,build,t,mode_"));
    assert_eq!(lines.count(), 3);
    assert!(out.join("config_echo.json").exists());
}

#[test]
fn seed_flag_overrides_configured_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"experiment": {"kind": "simulate", "seed": 2, "n_values": [5], "realizations": 1, "t_final": 0.002}}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = vortexmf(&["simulate", "--config", path(&cfg), "--out", path(&out), "--seed", "99"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let echo = std::fs::read_to_string(out.join("config_echo.json")).unwrap();
    assert!(echo.contains("\"seed\": 99"));
    let body = std::fs::read_to_string(out.join("diagnostics_n5_r0.csv")).unwrap();
    assert!(body.lines().nth(1).unwrap().starts_with("5,0,99,"));
}

#[test]
fn mismatched_kind_and_bad_config_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"experiment": {"kind": "solve", "seed": 2}}"#).unwrap();
    let o = vortexmf(&["converge", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("solve"));

    std::fs::write(&cfg, r#"{"experiment": {"kind": "converge", "seed": 2}, "noise": {"nu": -1}}"#).unwrap();
    let o = vortexmf(&["converge", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("noise.nu"));

    let o = vortexmf(&["converge", "--config", path(&dir.path().join("missing.json"))]);
    assert_eq!(o.status.code(), Some(2));
}
