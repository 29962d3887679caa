use std::path::Path;
use std::process::{Command, Output};

fn seplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seplab")).args(args).output().expect("binary runs")
}

fn config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.cfg");
    std::fs::write(&p, format!("physics.rho_left = 1\nphysics.rho_right = 1\n{body}")).unwrap();
    p.to_string_lossy().into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn steady_trivial_config() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    let cfg = config(d.path(), "physics.jbar = 0\n");
    let o = seplab(&["steady", "--config", &cfg, "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("steady.json")).unwrap()).unwrap();
    assert!(v["J_bar"].as_f64().unwrap().abs() < 1e-12);
    for key in ["gamma", "kappa", "phi_right_attained", "subsonic_margin", "mass_defect", "residuals", "nodes", "rho_bar", "Phi_bar", "E_bar"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["rho_bar"].as_array().unwrap().len(), 201);
}

#[test]
fn steady_voltage_mode() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "physics.mode = voltage\nphysics.phi_right = 0.02\n");
    let o = seplab(&["steady", "--config", &cfg, "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("steady.json")).unwrap()).unwrap();
    assert!((v["phi_right_attained"].as_f64().unwrap() - 0.02).abs() < 1e-8);
}

#[test]
fn supersonic_current_exits_2() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "physics.jbar = 1.5\n");
    let o = seplab(&["steady", "--config", &cfg, "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("supersonic"));
}

#[test]
fn missing_density_exits_1_with_field() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("c.cfg");
    std::fs::write(&p, "physics.rho_right = 1\n").unwrap();
    let o = seplab(&["steady", "--config", p.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("physics.rho_left"));
}

#[test]
fn simulate_rows_and_determinism() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "time.t_end = 1\ntime.snapshot_every = 100\n");
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for dir in [&a, &b] {
        let o = seplab(&["simulate", "--config", &cfg, "--seed", "17", "--out", dir.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ra = std::fs::read(a.join("run.csv")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("run.csv")).unwrap());
    let text = String::from_utf8(ra).unwrap();
    assert_eq!(text.lines().next().unwrap(), seplab::diagnostics::RUN_CSV_HEADER);

    let c = seplab::config::RunConfig::load(Path::new(&cfg)).unwrap();
    let (p, _) = c.steady_problem().unwrap();
    let (f0, _) = c.initial_state(&p, 17).unwrap();
    let icfg = seplab::integrator::IntegratorConfig { seed: 17, ..c.integrator_config() };
    let rec = seplab::integrator::simulate(&p, &f0, &icfg, &c.noise_model().unwrap()).unwrap();
    assert_eq!(text.lines().count(), rec.steps() + 2);
    let snaps = std::fs::read_dir(&a).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("snap_")).count();
    assert_eq!(snaps, rec.snapshots.len());
    let snap = std::fs::read_to_string(a.join("snap_100.csv")).unwrap();
    assert_eq!(snap.lines().next().unwrap(), "x,rho,J,Phi,E");
}

#[test]
fn simulate_zero_horizon_single_row() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "time.t_end = 0\n");
    let o = seplab(&["simulate", "--config", &cfg, "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(d.path().join("run.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("0.0000000000000000e0,"));
}

#[test]
fn ensemble_smoke_and_reproducibility() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "time.t_end = 5\n");
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for dir in [&a, &b] {
        let start = std::time::Instant::now();
        let o = seplab(&["ensemble", "--config", &cfg, "--paths", "4", "--seed", "3", "--out", dir.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(start.elapsed().as_secs() < 60);
    }
    assert_eq!(std::fs::read(a.join("summary.json")).unwrap(), std::fs::read(b.join("summary.json")).unwrap());
}

#[test]
fn invalid_moment_order_exits_1() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "ensemble.moment_orders = 0, 1\n");
    let o = seplab(&["ensemble", "--config", &cfg, "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ensemble.moment_orders"));
}

#[test]
fn failing_paths_exit_4_with_partial_summary() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "perturbation.amplitude = 31\ntime.t_end = 2\ngrid.n_cells = 40\nensemble.n_paths = 8\nnoise.amplitude = 2\n");
    let o = seplab(&["ensemble", "--config", &cfg, "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(v["partial"], serde_json::Value::Bool(true));
    assert!(v["n_failed"].as_u64().unwrap() >= 1);
}

#[test]
fn initial_vacuum_exits_3() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "perturbation.amplitude = 100\ngrid.n_cells = 40\n");
    let o = seplab(&["simulate", "--config", &cfg, "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn verify_suites() {
    let o = seplab(&["verify", "--suite", "poisson"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("[PASS]"));
    assert_eq!(code(&seplab(&["verify", "--suite", "nosuchsuite"])), 1);
}

#[test]
fn library_entry_point_matches_binary() {
    assert_eq!(seplab::cli::run(["seplab", "verify", "--suite", "nosuchsuite"]), 1);
    assert_eq!(seplab::cli::run(["seplab", "bogus"]), 1);
}
