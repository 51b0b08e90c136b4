//! End-to-end checks of config handling, outputs and determinism.

use nlselab::{parse_config, run};
use std::path::{Path, PathBuf};
use std::process::Command as Proc;

fn tmpdir(name: &str) -> PathBuf {
    let p = std::env::temp_dir().join(format!("nlselab-test-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&p);
    p
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn kv(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

#[test]
fn cfl_command_formula_value() {
    let cfg = parse_config(
        Some("command=cfl\ndelta_x=1.0\nr=1\nN=0\n"),
        &[],
    )
    .unwrap();
    let dir = tmpdir("cfl");
    let out = run(&cfg, &dir).unwrap();
    assert_eq!(out.exit_code, 0);
    let csv = read(&dir, "cfl.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "delta_x,r,N,eps_tilde,h_max");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let h_max: f64 = row[4].parse().unwrap();
    assert!((h_max - 0.267949).abs() < 1e-6);
}

#[test]
fn spectrum_check_matches_dense_oracle() {
    let cfg = parse_config(
        Some("command=spectrum-check\nK=16\ndelta_x=0.25\n"),
        &[],
    )
    .unwrap();
    let dir = tmpdir("spectrum");
    run(&cfg, &dir).unwrap();
    let csv = read(&dir, "spectrum-check.csv");
    let mut max_diff: f64 = 0.0;
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        max_diff = max_diff.max(cols[3].parse::<f64>().unwrap());
    }
    assert!(max_diff <= 1e-10, "max abs diff {max_diff:.3e}");
}

#[test]
fn linear_drift_is_flat() {
    let cfg = parse_config(
        None,
        &kv(&[
            ("command", "drift"),
            ("K", "8"),
            ("delta_x", "0.5"),
            ("lambda", "0"),
            ("r", "1"),
            ("h", "0.01"),
            ("T", "100"),
        ]),
    )
    .unwrap();
    let dir = tmpdir("lindrift");
    run(&cfg, &dir).unwrap();
    let csv = read(&dir, "drift.csv");
    let mut rows = csv.lines().skip(1);
    let first: Vec<f64> = rows
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    let e0 = first[4];
    let mut max_drift: f64 = 0.0;
    for line in csv.lines().skip(2) {
        let cols: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        max_drift = max_drift.max((cols[4] - e0).abs());
    }
    assert!(max_drift <= 1e-10, "energy drift {max_drift:.3e}");
}

#[test]
fn identical_config_reproduces_bytes() {
    let overrides = kv(&[
        ("command", "simulate"),
        ("K", "12"),
        ("delta_x", "0.25"),
        ("lambda", "1"),
        ("r", "1"),
        ("h", "0.01"),
        ("T", "1"),
        ("init", "noise"),
        ("seed", "42"),
    ]);
    let cfg = parse_config(None, &overrides).unwrap();
    let d1 = tmpdir("repro1");
    let d2 = tmpdir("repro2");
    run(&cfg, &d1).unwrap();
    run(&cfg, &d2).unwrap();
    assert_eq!(read(&d1, "simulate.csv"), read(&d2, "simulate.csv"));
    assert_eq!(read(&d1, "manifest.json"), read(&d2, "manifest.json"));
}

#[test]
fn stability_fail_exits_two() {
    // ε^κ > 1 at the initial record: the verdict is FAIL by construction.
    let cfg = parse_config(
        None,
        &kv(&[
            ("command", "stability"),
            ("K", "4"),
            ("delta_x", "0.25"),
            ("lambda", "-1"),
            ("r", "1"),
            ("h", "0.005"),
            ("epsilon", "2.0"),
            ("kappa", "0.25"),
            ("N", "0"),
            ("step_cap", "50"),
        ]),
    )
    .unwrap();
    let dir = tmpdir("stabfail");
    let out = run(&cfg, &dir).unwrap();
    assert_eq!(out.exit_code, 2);
    let manifest = read(&dir, "manifest.json");
    assert!(manifest.contains("\"verdict\": \"FAIL\""));
}

#[test]
fn binary_rejects_bad_config_without_writing() {
    let dir = tmpdir("badcfg");
    let status = Proc::new(env!("CARGO_BIN_EXE_nlselab"))
        .args([
            "drift", "--K", "8", "--delta_x", "0.5", "--lambda", "1", "--r", "1", "--h",
            "-0.1", "--T", "1", "--outdir",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&status.stderr);
    assert!(stderr.contains("`h`"), "stderr: {stderr}");
    assert!(!dir.exists(), "output directory must not be created");
}

#[test]
fn binary_runs_cfl() {
    let dir = tmpdir("bincfl");
    let out = Proc::new(env!("CARGO_BIN_EXE_nlselab"))
        .args(["cfl", "--delta_x", "0.1", "--r", "1", "--N", "0", "--outdir"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let csv = read(&dir, "cfl.csv");
    let h_max: f64 = csv
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(4)
        .unwrap()
        .parse()
        .unwrap();
    assert!((h_max - 0.00267949).abs() < 1e-7);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tmpdir("filecfg");
    std::fs::create_dir_all(&dir).unwrap();
    let cfgfile = dir.join("run.cfg");
    std::fs::write(&cfgfile, "command=cfl\ndelta_x=1.0\nr=1\nN=0\nh=0.02\n").unwrap();
    // Flag overrides the file's h; irrelevant for cfl but must parse.
    let outdir = dir.join("out");
    let out = Proc::new(env!("CARGO_BIN_EXE_nlselab"))
        .args(["cfl", "--config"])
        .arg(&cfgfile)
        .args(["--h", "0.01", "--outdir"])
        .arg(&outdir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}
