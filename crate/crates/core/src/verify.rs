//! Self-checks with pinned tolerances, one suite per acceptance criterion.
//! Shared by `seplab verify` and the `acceptance` test target.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::diagnostics::efield_identity_defect;
use crate::error::{Result, SepError};
use crate::integrator::{
    cfl_dt, initial_perturbation, integrate_on_path, simulate, step_with_normals, stream_rng, IntegratorConfig,
    NoiseModel, NoisePath, NoiseReduction, SchemeOptions,
};
use crate::model::{poisson_residual, solve_poisson, BoundaryData, DopingProfile, FlowField, Grid, PressureLaw};
use crate::monte_carlo::{fit_decay, run_ensemble, EnsembleConfig, EnsembleSummary};
use crate::output::{run_csv_bytes, summary_json_bytes};
use crate::perturbation::{
    first_order_residual, first_order_symmetrizer, picard_sequence, second_order_residual, second_order_symmetrizer,
    trajectory_distance,
};
use crate::problem::Problem;
use crate::steady::{solve_given_current, solve_given_voltage, SteadyOptions};

/// Suite names in criterion order.
pub const SUITES: [&str; 12] = [
    "steady",
    "roundtrip",
    "poisson",
    "symmetrizer",
    "stability",
    "calibration",
    "noise-law",
    "decay",
    "invariant",
    "picard",
    "field-identity",
    "reproducibility",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub criterion: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl SuiteOutcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<16} {:>8.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.criterion,
            self.name,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

/// Resolves `all` or a single suite name.
pub fn select(name: &str) -> Result<Vec<&'static str>> {
    if name == "all" {
        return Ok(SUITES.to_vec());
    }
    SUITES
        .iter()
        .find(|s| **s == name)
        .map(|s| vec![*s])
        .ok_or_else(|| SepError::Config { field: "--suite".into(), msg: format!("unknown suite `{name}`") })
}

/// Runs the named suites in order. The decay and invariant suites share one
/// ensemble run.
pub fn run_suites(names: &[&'static str]) -> Vec<SuiteOutcome> {
    let mut shared: Option<Result<(EnsembleSummary, f64)>> = None;
    let mut out = Vec::new();
    for &name in names {
        let criterion = SUITES.iter().position(|s| *s == name).map_or(0, |k| k + 1);
        let start = Instant::now();
        let (budget, res): (u64, Result<(bool, String)>) = match name {
            "steady" => (5, steady_suite()),
            "roundtrip" => (10, roundtrip_suite()),
            "poisson" => (5, poisson_suite()),
            "symmetrizer" => (5, symmetrizer_suite()),
            "stability" => (120, stability_suite()),
            "calibration" => (120, calibration_suite()),
            "noise-law" => (30, noise_law_suite()),
            "decay" | "invariant" => {
                let ens = shared.get_or_insert_with(decay_ensemble);
                let r = match ens {
                    Ok((s, _)) if name == "decay" => Ok(judge_decay(s)),
                    Ok((s, sup0)) => Ok(judge_invariant(s, *sup0)),
                    Err(e) => Err(e.clone()),
                };
                (1200, r)
            }
            "picard" => (300, picard_suite()),
            "field-identity" => (120, field_identity_suite()),
            "reproducibility" => (300, reproducibility_suite()),
            _ => (0, Err(SepError::Config { field: "--suite".into(), msg: format!("unknown suite `{name}`") })),
        };
        let elapsed = start.elapsed();
        let budget = Duration::from_secs(budget);
        let (mut passed, mut detail) = match res {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if elapsed > budget {
            passed = false;
            detail.push_str(&format!("; over budget {}s", budget.as_secs()));
        }
        out.push(SuiteOutcome { criterion, name, passed, detail, elapsed, budget });
    }
    out
}

fn law() -> PressureLaw {
    PressureLaw::new(2.0, 1.0).expect("valid law")
}

fn flat_problem(n: usize, j_bar: f64) -> Result<Problem> {
    let grid = Grid::new(n)?;
    let b = DopingProfile::constant(&grid, 1.0)?;
    let (st, _) = solve_given_current(&grid, &law(), &b, (1.0, 1.0), j_bar, 0.0, &SteadyOptions::default())?;
    Problem::new(law(), b, st)
}

fn bump(grid: &Grid) -> Result<DopingProfile> {
    DopingProfile::bump(grid, 1.0, 0.5, 0.15, 0.4)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `f` on the nodes of a grid `stride` times coarser.
fn coarsen(f: &[f64], stride: usize) -> Vec<f64> {
    f.iter().step_by(stride).copied().collect()
}

fn in_band(r: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&r)
}

fn steady_suite() -> Result<(bool, String)> {
    let g = Grid::new(100)?;
    let b = DopingProfile::constant(&g, 1.0)?;
    let bd = BoundaryData::new(1.0, 1.0, 0.0, 0.0)?;
    let opts = SteadyOptions::default();
    let (s, _) = solve_given_voltage(&g, &law(), &b, &bd, &opts)?;
    let trivial = s.residual_norm.max(sup_diff(&s.rho_bar, &vec![1.0; 101])).max(s.j_bar.abs());

    let mut rho = Vec::new();
    for n in [100, 200, 400] {
        let g = Grid::new(n)?;
        let (s, _) = solve_given_current(&g, &law(), &bump(&g)?, (1.0, 1.0), 0.02, 0.0, &opts)?;
        rho.push(s.rho_bar);
    }
    let e1 = sup_diff(&rho[0], &coarsen(&rho[1], 2));
    let e2 = sup_diff(&coarsen(&rho[1], 2), &coarsen(&rho[2], 4));
    let ratio = e1 / e2;
    Ok((trivial < 1e-12 && in_band(ratio, 3.5, 4.5), format!("trivial residual {trivial:.2e}; Richardson ratio {ratio:.3}")))
}

fn roundtrip_suite() -> Result<(bool, String)> {
    let g = Grid::new(200)?;
    let b = bump(&g)?;
    let bd = BoundaryData::new(1.0, 1.2, 0.0, 0.3)?;
    let opts = SteadyOptions::default();
    let (v, _) = solve_given_voltage(&g, &law(), &b, &bd, &opts)?;
    let (c, _) = solve_given_current(&g, &law(), &b, (1.0, 1.2), v.j_bar, 0.0, &opts)?;
    let d = sup_diff(&v.rho_bar, &c.rho_bar);
    Ok((d <= 1e-8, format!("J = {:.6e}; |rho_V - rho_J|_inf = {d:.2e}", v.j_bar)))
}

fn poisson_suite() -> Result<(bool, String)> {
    let g = Grid::new(200)?;
    let b = bump(&g)?;
    let rho = g.sample(|x| 1.0 + 0.3 * (3.0 * PI * x).sin() * (-x).exp());
    let phi = solve_poisson(&g, &rho, &b, &BoundaryData::new(1.0, 1.0, 0.1, -0.2)?)?;
    let apply_back = poisson_residual(&g, &phi, &rho, b.values());

    let f = |x: f64| (2.0 * x).sin() + x * x * x;
    let fx = |x: f64| 2.0 * (2.0 * x).cos() + 3.0 * x * x;
    let fxx = |x: f64| -4.0 * (2.0 * x).sin() + 6.0 * x;
    let integral = (1.0 - 2f64.cos()) / 2.0 + 0.25;
    let mut errs = Vec::new();
    for n in [50, 100, 200] {
        let g = Grid::new(n)?;
        let v = g.sample(f);
        errs.push([
            sup_diff(&g.dx(&v), &g.sample(fx)),
            sup_diff(&g.dxx(&v), &g.sample(fxx)),
            (g.integrate(&v) - integral).abs(),
        ]);
    }
    let ratios: Vec<f64> = (0..3).flat_map(|k| [errs[0][k] / errs[1][k], errs[1][k] / errs[2][k]]).collect();
    let ok = apply_back <= 1e-10 && ratios.iter().all(|r| in_band(*r, 3.5, 4.5));
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    Ok((ok, format!("apply-back {apply_back:.2e}; order ratios (dx, dxx, int) [{}]", shown.join(", "))))
}

fn symmetrizer_suite() -> Result<(bool, String)> {
    let g = Grid::new(400)?;
    let b = DopingProfile::bump(&g, 1.0, 0.5, 0.25, 0.2)?;
    let (s, _) = solve_given_current(&g, &law(), &b, (1.0, 1.2), 0.02, 0.0, &SteadyOptions::default())?;
    let r = first_order_symmetrizer(&s, &law(), 1.0)?;
    let rt = second_order_symmetrizer(&s, &law(), 1.0)?;
    let res = first_order_residual(&s, &law(), &r)?.max(second_order_residual(&s, &law(), &rt)?);
    let positive = r.iter().chain(&rt).all(|v| *v > 0.0);

    let flat = flat_problem(100, 0.0)?;
    let rt0 = 1.5;
    let rt = second_order_symmetrizer(&flat.steady, &flat.law, rt0)?;
    let closed = (0..rt.len()).map(|i| (rt[i] - (rt0 + flat.grid.x(i) / 3.0)).abs()).fold(0.0, f64::max);
    Ok((
        res <= 1e-6 && closed <= 1e-10 && positive,
        format!("ODE residual {res:.2e}; closed form error {closed:.2e}; positive {positive}"),
    ))
}

fn stability_suite() -> Result<(bool, String)> {
    let p = flat_problem(200, 0.01)?;
    let (f0, _) = initial_perturbation(&p, 1e-2, 3, &mut stream_rng(0, u64::MAX))?;
    let cfg = IntegratorConfig { t_end: 10.0, ..Default::default() };
    let rec = simulate(&p, &f0, &cfg, &NoiseModel::off())?;
    if let Some(f) = &rec.failure {
        return Ok((false, format!("path failed at t = {}: {}", f.t_last, f.error)));
    }
    let e0 = rec.frames[0].rel_energy;
    let e1 = rec.frames.last().map_or(f64::NAN, |f| f.rel_energy);
    let comp: Vec<f64> = rec.frames.iter().map(|f| f.composite).collect();
    let fit = fit_decay(&rec.times, &comp, (2.5, 7.5))?;
    let ratio = e1 / e0;
    Ok((
        ratio < 0.01 && fit.r_squared > 0.9 && fit.zeta_hat > 0.0,
        format!("E(T)/E(0) = {ratio:.2e}; zeta = {:.3}, r2 = {:.4}", fit.zeta_hat, fit.r_squared),
    ))
}

/// Rest state of the flat problem carrying a uniform current `j0`.
fn uniform_current(p: &Problem, j0: f64) -> FlowField {
    let mut f = p.rest.clone();
    f.current.iter_mut().for_each(|j| *j = j0);
    f
}

/// Flat-state reduction: `J` stays uniform and obeys
/// `dJ = -J dt + J Y(J) dB`, so `E[J_t] = J_0 e^{-t}`.
fn calibration_suite() -> Result<(bool, String)> {
    let p = flat_problem(4, 0.0)?;
    let opts = SchemeOptions::default();
    let node = 2;

    let (nu, j0, dt, steps, paths) = (0.5, 1.0, 1e-3, 1000, 10_000u64);
    let noise = NoiseModel::new(nu, 16, NoiseReduction::SingleBrownian)?;
    let finals: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let mut rng = stream_rng(7, k);
            let mut s = uniform_current(&p, j0);
            let mut xi = Vec::new();
            for _ in 0..steps {
                noise.draw_normals(&mut rng, &mut xi);
                s = step_with_normals(&p, &opts, &noise, &s, dt, &xi)?.0;
            }
            Ok(s.current[node])
        })
        .collect::<Result<_>>()?;
    let (mean, se) = crate::stats::mean_stderr(&finals);
    let exact = j0 * (-(steps as f64) * dt).exp();
    let z = (mean - exact).abs() / se;

    // strong error at T = 0.25 against a 2^11-step solution on the same
    // Brownian path; coarse steps use summed fine increments
    let (nu, horizon, fine_exp, levels, paths) = (2.0, 0.25, 11, [4, 5, 6, 7], 16_000u64);
    let noise = NoiseModel::new(nu, 16, NoiseReduction::SingleBrownian)?;
    let fine = 1usize << fine_exp;
    let errs: Vec<[f64; 4]> = (0..paths)
        .into_par_iter()
        .map(|k| -> Result<[f64; 4]> {
            let mut rng = stream_rng(11, k);
            let mut xi = Vec::new();
            let normals: Vec<f64> = (0..fine)
                .map(|_| {
                    noise.draw_normals(&mut rng, &mut xi);
                    xi[0]
                })
                .collect();
            let run = |e: usize| -> Result<f64> {
                let m = 1usize << e;
                let group = fine / m;
                let mut s = uniform_current(&p, 1.0);
                for c in normals.chunks(group) {
                    let z = c.iter().sum::<f64>() / (group as f64).sqrt();
                    s = step_with_normals(&p, &opts, &noise, &s, horizon / m as f64, &[z])?.0;
                }
                Ok(s.current[node])
            };
            let reference = run(fine_exp)?;
            let mut out = [0.0; 4];
            for (o, e) in out.iter_mut().zip(levels) {
                *o = (run(e)? - reference).powi(2);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let rms: Vec<f64> = (0..4).map(|l| (errs.iter().map(|e| e[l]).sum::<f64>() / paths as f64).sqrt()).collect();
    let ratios: Vec<f64> = rms.windows(2).map(|w| w[0] / w[1]).collect();
    let ok = z <= 3.0 && ratios.iter().all(|r| in_band(*r, 1.3, 1.5));
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    Ok((ok, format!("mean error {z:.2} stderr; strong ratios [{}]", shown.join(", "))))
}

fn noise_law_suite() -> Result<(bool, String)> {
    let (nu, dt, n) = (0.05, 1e-3, 100_000);
    let j = [1.0];
    let k = NoiseModel::new(nu, 16, NoiseReduction::KModes)?;
    let s = NoiseModel::new(nu, 16, NoiseReduction::SingleBrownian)?;
    let mut rk = stream_rng(3, 0);
    let mut rs = stream_rng(3, 1);
    let a: Vec<f64> = (0..n).map(|_| k.sample_increment(&j, dt, &mut rk)[0]).collect();
    let b: Vec<f64> = (0..n).map(|_| s.sample_increment(&j, dt, &mut rs)[0]).collect();
    let ks = crate::stats::ks_two_sample(&a, &b, 0.01);

    let sq: Vec<f64> = a.iter().map(|v| v * v).collect();
    let (var, se) = crate::stats::mean_stderr(&sq);
    let target = (nu * j[0] / (1.0 + j[0] * j[0])).powi(2) * dt * k.weight_sum_sq();
    let z = (var - target).abs() / se;
    Ok((
        !ks.reject && z <= 3.0,
        format!("KS D = {:.4} (critical {:.4}, p = {:.3}); variance error {z:.2} stderr", ks.statistic, ks.critical, ks.p_value),
    ))
}

/// The ensemble behind the decay and invariant suites, plus the sup norm of
/// the initial density perturbation.
pub fn decay_ensemble() -> Result<(EnsembleSummary, f64)> {
    let p = flat_problem(100, 0.01)?;
    let (f0, w0) = initial_perturbation(&p, 1e-2, 3, &mut stream_rng(0, u64::MAX))?;
    let sup0 = Grid::sup(&w0.sigma);
    let noise = NoiseModel::new(0.05, 16, NoiseReduction::SingleBrownian)?;
    let icfg = IntegratorConfig { t_end: 20.0, ..Default::default() };
    let cfg = EnsembleConfig {
        n_paths: 256,
        master_seed: 2024,
        delta_ladder: vec![sup0 / 100.0, sup0 / 10.0, sup0 / 2.0],
        ..Default::default()
    };
    Ok((run_ensemble(&p, &f0, &icfg, &noise, &cfg)?, sup0))
}

fn judge_decay(s: &EnsembleSummary) -> (bool, String) {
    let mut ok = s.n_failed == 0 && s.fits.len() == 3;
    let mut parts = Vec::new();
    for f in &s.fits {
        match (f.zeta_hat, f.r2) {
            (Some(z), Some(r2)) => {
                ok &= z > 0.0 && r2 > 0.8;
                parts.push(format!("m={} zeta {z:.3} r2 {r2:.3}", f.m));
            }
            _ => {
                ok = false;
                parts.push(format!("m={} fit failed", f.m));
            }
        }
    }
    ok &= s.scaling_consistent == Some(true);
    let ratios: Vec<String> = s.scaling.iter().map(|r| format!("{:.3}", r.ratio)).collect();
    (ok, format!("{}; ratios [{}]; failed paths {}", parts.join(", "), ratios.join(", "), s.n_failed))
}

fn judge_invariant(s: &EnsembleSummary, sup0: f64) -> (bool, String) {
    let Some(inv) = &s.invariant else {
        return (false, "no post-burn-in data".into());
    };
    let half = inv.ladder.iter().find(|r| r.delta == sup0 / 2.0).map_or(0.0, |r| r.fraction);
    let ok = inv.mean_sigma_sup < 0.1 * sup0 && half > 0.95;
    (ok, format!("mean sup {:.2e} vs initial {sup0:.2e}; occupation(initial/2) {half:.4}", inv.mean_sigma_sup))
}

fn picard_suite() -> Result<(bool, String)> {
    let p = flat_problem(100, 0.01)?;
    let noise = NoiseModel::new(0.02, 16, NoiseReduction::SingleBrownian)?;
    let (f0, w0) = initial_perturbation(&p, 5e-2, 3, &mut stream_rng(0, u64::MAX))?;
    let opts = SchemeOptions::default();
    let t = 0.5;
    let steps = (t / cfl_dt(&p.grid, &f0, &p.law, &opts)?).ceil() as usize;
    let dt = t / steps as f64;
    let path = NoisePath::sample(&noise, dt, steps, &mut stream_rng(1, 0));
    let seq = picard_sequence(&p, &opts, &noise, &w0, &path, 5)?;
    let d: Vec<f64> = seq.windows(2).map(|w| trajectory_distance(&p.grid, &w[0], &w[1])).collect();
    let ratios: Vec<f64> = d.windows(2).map(|w| w[1] / w[0]).collect();
    let direct = integrate_on_path(&p, &opts, &noise, &f0, &path)?;
    let gap = trajectory_distance(&p.grid, seq.last().expect("iterates"), &direct);
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.2e}")).collect();
    Ok((
        ratios.len() == 4 && ratios.iter().all(|r| *r < 1.0),
        format!("distance ratios n=2..5 [{}]; gap to direct {gap:.2e}", shown.join(", ")),
    ))
}

fn field_identity_suite() -> Result<(bool, String)> {
    let mut defects = Vec::new();
    for (k, n) in [50usize, 100, 200, 400].into_iter().enumerate() {
        let p = flat_problem(n, 0.01)?;
        let (f0, _) = initial_perturbation(&p, 1e-2, 3, &mut stream_rng(0, u64::MAX))?;
        // dt shrinks like h^2, matching the second-order spatial error
        let scheme = SchemeOptions { cfl: 0.4 / 2f64.powi(k as i32), reconstruction: true, ..Default::default() };
        let cfg = IntegratorConfig { t_end: 0.5, snapshot_every: 1, scheme, ..Default::default() };
        let rec = simulate(&p, &f0, &cfg, &NoiseModel::off())?;
        defects.push(efield_identity_defect(&p.grid, &rec.snapshot_states())?);
    }
    let ratios: Vec<f64> = defects.windows(2).map(|w| w[0] / w[1]).collect();
    let shown: Vec<String> = defects.iter().map(|d| format!("{d:.2e}")).collect();
    let rs: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
    Ok((ratios.iter().all(|r| *r >= 2.0), format!("defects [{}]; ratios [{}]", shown.join(", "), rs.join(", "))))
}

fn reproducibility_suite() -> Result<(bool, String)> {
    let p = flat_problem(50, 0.01)?;
    let (f0, _) = initial_perturbation(&p, 1e-2, 3, &mut stream_rng(5, u64::MAX))?;
    let noise = NoiseModel::new(0.05, 16, NoiseReduction::SingleBrownian)?;
    let icfg = IntegratorConfig { t_end: 2.0, seed: 5, ..Default::default() };
    let a = run_csv_bytes(&simulate(&p, &f0, &icfg, &noise)?.frames);
    let b = run_csv_bytes(&simulate(&p, &f0, &icfg, &noise)?.frames);
    let summary = |threads: usize| -> Result<Vec<u8>> {
        let cfg = EnsembleConfig { n_paths: 16, master_seed: 5, threads, ..Default::default() };
        summary_json_bytes(&run_ensemble(&p, &f0, &icfg, &noise, &cfg)?)
    };
    let (s1, s4, s1b) = (summary(1)?, summary(4)?, summary(1)?);
    let ok = a == b && s1 == s4 && s1 == s1b;
    Ok((ok, format!("run.csv identical {}; summary.json identical across 1/4 workers {}", a == b, s1 == s4 && s1 == s1b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection() {
        assert_eq!(select("all").unwrap().len(), 12);
        assert_eq!(select("poisson").unwrap(), vec!["poisson"]);
        assert!(matches!(select("nosuchsuite"), Err(SepError::Config { .. })));
    }

    #[test]
    fn fast_suites_pass() {
        for o in run_suites(&["steady", "roundtrip", "poisson", "symmetrizer"]) {
            assert!(o.passed, "{}", o.line());
        }
    }
}
