//! `seplab` command line: `steady`, `simulate`, `ensemble`, `verify`.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 steady solver
//! failure, 3 path failure, 4 partial ensemble (more than 5% failed paths).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::diagnostics::write_snapshot;
use crate::error::SepError;
use crate::integrator::simulate;
use crate::monte_carlo::run_ensemble;
use crate::output::{run_csv_bytes, steady_json_bytes, summary_json_bytes, write_bytes};
use crate::problem::Problem;
use crate::verify::{run_suites, select};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_STEADY: i32 = 2;
pub const EXIT_PATH: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "seplab", version, about = "Stochastic Euler-Poisson semiconductor model: steady states, SDE paths and ensembles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file with `section.key = value` lines; defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the steady state and write steady.json.
    Steady(Common),
    /// Integrate one path and write run.csv plus snapshots.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Seed for the initial perturbation and the noise (overrides `time.seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a path ensemble and write summary.json.
    Ensemble {
        #[command(flatten)]
        common: Common,
        /// Master seed (overrides `ensemble.master_seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Number of paths (overrides `ensemble.n_paths`).
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Run self-check suites and print a pass/fail table.
    Verify {
        /// Suite name or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

fn fail(code: i32, msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    code
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), i32> {
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(|e| fail(EXIT_CONFIG, e))?,
        None => RunConfig::default(),
    };
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&out).map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", out.display())))?;
    Ok((cfg, out))
}

fn solve(cfg: &RunConfig) -> Result<(Problem, crate::steady::SteadySolveReport), i32> {
    cfg.steady_problem().map_err(|e| match e {
        SepError::Config { .. } => fail(EXIT_CONFIG, e),
        e => fail(EXIT_STEADY, format!("steady solve failed: {e}")),
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), i32> {
    write_bytes(path, bytes).map_err(|e| fail(EXIT_CONFIG, e))
}

fn cmd_steady(common: &Common) -> Result<i32, i32> {
    let (cfg, out) = load(common)?;
    let (problem, report) = solve(&cfg)?;
    let bytes = steady_json_bytes(&problem, &report).map_err(|e| fail(EXIT_CONFIG, e))?;
    write(&out.join("steady.json"), &bytes)?;
    println!(
        "steady: J_bar = {:e}, phi(1) = {:e}, subsonic margin = {:e}, {} Newton iterations",
        problem.steady.j_bar,
        problem.steady.phi_right(),
        problem.steady.subsonic_margin,
        report.iterations
    );
    Ok(EXIT_OK)
}

fn cmd_simulate(common: &Common, seed: Option<u64>) -> Result<i32, i32> {
    let (mut cfg, out) = load(common)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (problem, _) = solve(&cfg)?;
    let (initial, _) = cfg.initial_state(&problem, cfg.seed).map_err(|e| fail(EXIT_PATH, e))?;
    let noise = cfg.noise_model().map_err(|e| fail(EXIT_CONFIG, e))?;
    let rec = simulate(&problem, &initial, &cfg.integrator_config(), &noise).map_err(|e| fail(EXIT_PATH, e))?;
    write(&out.join("run.csv"), &run_csv_bytes(&rec.frames))?;
    for (step, state) in &rec.snapshots {
        write_snapshot(&out.join(format!("snap_{step}.csv")), &problem.grid, state).map_err(|e| fail(EXIT_CONFIG, e))?;
    }
    if let Some(f) = &rec.failure {
        return Err(fail(EXIT_PATH, format!("path failed after t = {} ({} steps): {}", f.t_last, rec.steps(), f.error)));
    }
    let last = rec.frames.last().expect("initial frame");
    println!("simulate: {} steps to t = {}, composite {:e}", rec.steps(), last.t, last.composite);
    Ok(EXIT_OK)
}

fn cmd_ensemble(common: &Common, seed: Option<u64>, paths: Option<usize>) -> Result<i32, i32> {
    let (mut cfg, out) = load(common)?;
    if let Some(s) = seed {
        cfg.ensemble.master_seed = s;
    }
    if let Some(n) = paths {
        cfg.ensemble.n_paths = n;
    }
    cfg.ensemble.validate(cfg.t_end).map_err(|e| fail(EXIT_CONFIG, e))?;
    let (problem, _) = solve(&cfg)?;
    let (initial, _) = cfg.initial_state(&problem, cfg.ensemble.master_seed).map_err(|e| fail(EXIT_PATH, e))?;
    let noise = cfg.noise_model().map_err(|e| fail(EXIT_CONFIG, e))?;
    let summary = run_ensemble(&problem, &initial, &cfg.integrator_config(), &noise, &cfg.ensemble).map_err(|e| match e {
        SepError::Config { .. } => fail(EXIT_CONFIG, e),
        e => fail(EXIT_PATH, e),
    })?;
    write(&out.join("summary.json"), &summary_json_bytes(&summary).map_err(|e| fail(EXIT_CONFIG, e))?)?;
    for f in &summary.fits {
        match (f.zeta_hat, f.r2) {
            (Some(z), Some(r2)) => println!("m = {}: zeta = {z:.4}, r2 = {r2:.4}", f.m),
            _ => println!("m = {}: fit failed ({})", f.m, f.error.as_deref().unwrap_or("")),
        }
    }
    if summary.partial {
        return Err(fail(EXIT_PARTIAL, format!("{} of {} paths failed; partial summary written", summary.n_failed, cfg.ensemble.n_paths)));
    }
    Ok(EXIT_OK)
}

fn cmd_verify(suite: &str) -> Result<i32, i32> {
    let names = select(suite).map_err(|e| fail(EXIT_CONFIG, e))?;
    let outcomes = run_suites(&names);
    for o in &outcomes {
        println!("{}", o.line());
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} passed, {failed} failed", outcomes.len() - failed);
    Ok(if failed == 0 { EXIT_OK } else { EXIT_CONFIG })
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let r = match &cli.command {
        Command::Steady(c) => cmd_steady(c),
        Command::Simulate { common, seed } => cmd_simulate(common, *seed),
        Command::Ensemble { common, seed, paths } => cmd_ensemble(common, *seed, *paths),
        Command::Verify { suite } => cmd_verify(suite),
    };
    r.unwrap_or_else(|code| code)
}
