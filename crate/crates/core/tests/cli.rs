use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use magsplit::cli::{run_control, run_evolve, run_sweep, ControlMode, ControlReport, RunConfig, RunOptions, SweepParam};
use tempfile::TempDir;

const FREE: &str = r#"
[grid]
R = 4.0
h = 0.25
d = 1

[time]
T = 0.5
steps = 10

[initial]
kind = "gaussian"
center = [0.0]
width = 0.7
momentum = [1.0]

[output]
directory = "out"
snapshot_times = [0.0, 0.5]
"#;

const CONTROL: &str = r#"
[grid]
R = 4.0
h = 0.25
d = 1

[time]
T = 1.0
steps = 20

[potential]
w_reg = { kind = "harmonic", scale = 0.5 }
v_con = { kind = "gaussian", center = [1.0], width = 1.5 }

[control]
knots = [[0.0, 0.0], [0.5, 0.4], [1.0, 0.0]]

[initial]
kind = "gaussian"
center = [0.5]
width = 0.8

[cost]
kappa = 0.05
modes = 0
directions = 3

[output]
directory = "out"
"#;

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let p = dir.path().join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn solver(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_solver")).args(args).output().unwrap()
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

#[test]
fn unknown_key_is_a_config_error_with_line() {
    let dir = TempDir::new().unwrap();
    let p = write_config(&dir, &FREE.replace("steps = 10", "steps = 10\nstep_size = 0.1"));
    let out = solver(&["evolve", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("line 10"), "{msg}");
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = RunConfig::parse(CONTROL).unwrap();
    let text = cfg.to_toml();
    let again = RunConfig::parse(&text).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(text, again.to_toml());
}

#[test]
fn evolve_output_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let p = write_config(&dir, FREE);
    let first = run_evolve(&p, &RunOptions::default()).unwrap();
    let snapshots: Vec<String> = first.files.iter().map(|f| read(f)).collect();
    let second = run_evolve(&p, &RunOptions::default()).unwrap();
    assert_eq!(first.files, second.files);
    for (f, before) in second.files.iter().zip(&snapshots) {
        assert_eq!(&read(f), before, "{}", f.display());
    }
    assert!(dir.path().join("out/timeseries.csv").exists());
    assert!(dir.path().join("out/snapshot_0.5.csv").exists());
}

#[test]
fn free_run_conserves_mass() {
    let dir = TempDir::new().unwrap();
    let p = write_config(&dir, FREE);
    let report = run_evolve(&p, &RunOptions::default()).unwrap();
    assert!(report.mass_drift <= 1e-9, "{}", report.mass_drift);
    let series = read(&dir.path().join("out/timeseries.csv"));
    let mut lines = series.lines();
    assert!(lines.next().unwrap().starts_with("t,mass,h1,w1,w2,energy,cx"));
    let masses: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(masses.len(), 11);
    for m in &masses {
        assert!((m - masses[0]).abs() <= 1e-9 * masses[0]);
    }
}

#[test]
fn single_value_sweep_has_empty_rate() {
    let dir = TempDir::new().unwrap();
    let p = write_config(&dir, FREE);
    let rows = run_sweep(&p, SweepParam::Tau, &[0.05], &RunOptions::default()).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].rate.is_none());
    let csv = read(&dir.path().join("out/sweep.csv"));
    let line = csv.lines().nth(1).unwrap();
    assert!(line.starts_with("tau,0.05,") && line.ends_with(','), "{line}");
}

#[test]
fn tau_sweep_rates_are_second_order() {
    let dir = TempDir::new().unwrap();
    let p = write_config(&dir, FREE);
    let out = solver(&["sweep", p.to_str().unwrap(), "--param", "tau", "--values", "0.1,0.05,0.025"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir.path().join("out/sweep.csv"));
    let rates: Vec<f64> = csv.lines().skip(2).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(rates.len(), 2);
    for r in rates {
        assert!((r - 2.0).abs() < 0.2, "{r}");
    }
}

#[test]
fn control_eval_at_zero_is_the_state_term() {
    let dir = TempDir::new().unwrap();
    let text = CONTROL.replace("[0.5, 0.4]", "[0.5, 0.0]");
    let p = write_config(&dir, &text);
    let ControlReport::Eval { state, penalty } = run_control(&p, ControlMode::Eval, &RunOptions::default()).unwrap() else {
        panic!("expected eval report");
    };
    assert_eq!(penalty, 0.0);
    let cfg = RunConfig::parse(&text).unwrap().to_splitting().unwrap();
    let mass = cfg.initial.sample(&cfg.grid().unwrap()).unwrap().mass();
    assert!((state - mass).abs() <= 1e-9 * mass);
}

#[test]
fn search_without_modes_returns_baseline() {
    let dir = TempDir::new().unwrap();
    let p = write_config(&dir, CONTROL);
    let ControlReport::Search(s) = run_control(&p, ControlMode::Search, &RunOptions::default()).unwrap() else {
        panic!("expected search report");
    };
    assert_eq!(s.best, s.baseline);
    assert!(s.coefficients.is_empty());
}

#[test]
fn gradcheck_writes_agreeing_rows() {
    let dir = TempDir::new().unwrap();
    let p = write_config(&dir, CONTROL);
    let out = solver(&["control", p.to_str().unwrap(), "--mode", "gradcheck"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir.path().join("out/gradcheck.csv"));
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        let rel: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!(rel < 1e-6, "{r}");
    }
}

#[test]
fn hartree_in_control_mode_exits_with_4() {
    let dir = TempDir::new().unwrap();
    let p = write_config(&dir, &format!("{CONTROL}\n[hartree]\nenabled = true\n"));
    let out = solver(&["control", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn export_matrix_writes_triplets() {
    let dir = TempDir::new().unwrap();
    let p = write_config(&dir, FREE);
    let m = dir.path().join("h.txt");
    let out = solver(&["--export-matrix", m.to_str().unwrap(), "--stencil", "compact", "evolve", p.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(&m);
    // 31 nodes, compact stencil: diagonal plus two neighbours for interior rows
    assert_eq!(text.lines().count(), 31 + 2 * 30);
    for l in text.lines() {
        assert_eq!(l.split_whitespace().count(), 4, "{l}");
    }
}

#[test]
fn missing_file_is_a_config_error() {
    let out = solver(&["evolve", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(2));
}
