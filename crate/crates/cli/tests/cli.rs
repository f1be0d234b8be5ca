use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn clocksim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clocksim"))
        .args(args)
        .env_remove("CLOCKSIM_OUT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = clocksim(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

#[test]
fn ode_trace_has_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ode");
    ok(&["simulate", "--model", "builtin", "--light", "LD", "12", "12", "--engine", "ode", "--t-end", "240", "--out", s(&out)]);
    let text = read(&out.join("trace.csv"));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2402);
    assert!(lines[0].starts_with("time_h,acc,"));
    assert!(lines[2401].starts_with("240,"));
    let manifest: serde_json::Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["config"]["engine"], "ode");
    assert_eq!(manifest["details"]["ode"]["rel_tol"], 1e-6);
}

#[test]
fn inverted_periodic_light_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = clocksim(&["simulate", "--light", "PERIODIC", "18", "6", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_dawn must be < t_dusk"));
}

#[test]
fn unknown_config_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "engine = \"ode\"\nt_ned = 4\n").unwrap();
    let out = clocksim(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_ned"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[simulate]\nengine = \"ode\"\nt_end = 48\nlight = \"LD 12 12\"\ngrid = 1\n").unwrap();
    let out = dir.path().join("o");
    ok(&["simulate", "--config", s(&cfg), "--t-end", "10", "--out", s(&out)]);
    assert_eq!(read(&out.join("trace.csv")).lines().count(), 12);
}

#[test]
fn missing_seed_is_chosen_and_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let r = ok(&["simulate", "--engine", "ssa", "--t-end", "5", "--out", s(&out)]);
    let err = String::from_utf8_lossy(&r.stderr);
    let seed: u64 = err.trim().strip_prefix("seed: ").unwrap().parse().unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["config"]["seed"], seed);
}

#[test]
fn output_directory_defaults_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("env-out");
    let r = Command::new(env!("CARGO_BIN_EXE_clocksim"))
        .args(["simulate", "--t-end", "1"])
        .env("CLOCKSIM_OUT", &target)
        .output()
        .unwrap();
    assert!(r.status.success());
    assert!(target.join("trace.csv").exists());
}

#[test]
fn globally_query_and_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let ens = dir.path().join("dd");
    ok(&[
        "simulate", "--engine", "ssa", "--runs", "200", "--light", "DD", "--t-end", "500", "--seed", "4",
        "--record-start", "96", "--grid", "2", "--event-window", "96", "500", "--out", s(&ens),
    ]);
    let q = dir.path().join("q");
    ok(&["analyze", "query", "--input", s(&ens), "--globally", "96", "500", "--obs", "Total_LHY", "--le", "0..20:2", "--out", s(&q)]);
    let text = read(&q.join("query.csv"));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "param,p_hat,ci");
    assert_eq!(lines.len(), 12);
    let p: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(p.windows(2).all(|w| w[0] <= w[1]));

    let d = dir.path().join("d");
    ok(&["analyze", "distribution", "--input", s(&ens), "--obs", "Total_LHY", "--t", "96", "120", "--levels", "0", "10", "--out", s(&d)]);
    let m = read(&d.join("distribution.csv"));
    assert_eq!(m.lines().count(), 1 + 13);
    assert!(m.lines().next().unwrap().starts_with("level,96,98,"));
    assert!(read(&d.join("moments.csv")).starts_with("time_h,mu,sigma,c_v\n"));
}

#[test]
fn corrupted_ensemble_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let ens = dir.path().join("e");
    ok(&["simulate", "--engine", "ssa", "--t-end", "2", "--seed", "1", "--out", s(&ens)]);
    let bin = ens.join("ensemble.bin");
    let mut bytes = fs::read(&bin).unwrap();
    bytes[8] = 99; // version field
    fs::write(&bin, bytes).unwrap();
    let out = clocksim(&["analyze", "distribution", "--input", s(&ens), "--t", "0", "1", "--levels", "0", "5", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));
}

#[test]
fn phase_of_flat_trace_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("flat.model");
    fs::write(&model, "[species]\nX = 5\n[omega]\n1\n[observables]\nTotal = X\n[reactions]\n").unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--model", s(&model), "--t-end", "48", "--out", s(&sim)]);
    let ph = dir.path().join("ph");
    ok(&["analyze", "phase", "--input", s(&sim), "--obs", "Total", "--out", s(&ph)]);
    assert_eq!(read(&ph.join("phase.csv")).lines().count(), 1);
    assert_eq!(read(&ph.join("phase_summary.csv")).lines().nth(1), Some("1,0,,,"));
}

#[test]
fn phase_of_stochastic_runs() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--engine", "ssa", "--runs", "3", "--light", "LD", "12", "12", "--t-end", "120", "--seed", "2", "--out", s(&sim)]);
    let ph = dir.path().join("ph");
    ok(&["analyze", "phase", "--input", s(&sim), "--window", "24", "120", "--out", s(&ph)]);
    let text = read(&ph.join("phase.csv"));
    let runs: std::collections::BTreeSet<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(runs.len(), 3);
}

#[test]
fn fixed_points_report() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["fixed-points", "--model", "builtin", "--out", s(dir.path())]);
    let eig = read(&dir.path().join("eigenvalues.csv"));
    assert_eq!(eig.lines().count(), 15);
    assert!(eig.contains("DD,StableNode,0,-7.274"));
    assert!(eig.contains("LL,StableFocus"));
    assert!(read(&dir.path().join("fixed_points.txt")).contains("classification,StableFocus"));
}

#[test]
fn dme_without_mutants_runs_wild_type_only() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["dme", "--mutants", "0", "--wildtype", "3", "--mode", "mean", "--seed", "1", "--out", s(dir.path())]);
    let summary = read(&dir.path().join("dme_summary.csv"));
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.lines().nth(1).unwrap().starts_with("wildtype,3,0,15,"));
    assert!(!dir.path().join("dme_bins.csv").exists());
    let runs = read(&dir.path().join("dme_runs.csv"));
    assert!(runs.starts_with("run,cohort,factor,seed,cycle,peak_phase_h"));
}

#[test]
fn bad_input_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    let out = clocksim(&["analyze", "query", "--input", s(&missing), "--at", "1", "--le", "3", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(4));
    let out = clocksim(&["simulate", "--t-end", "-1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = clocksim(&["simulate", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}
