//! Path ensembles: moments of the composite statistic, exponential decay
//! fits, moment-order scaling and occupation statistics of the
//! time-averaged law.

use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::DiagnosticFrame;
use crate::error::{Result, SepError};
use crate::integrator::{integrate, IntegratorConfig, NoiseModel, PathRecord};
use crate::model::FlowField;
use crate::problem::Problem;
use crate::stats::{linear_fit, mean_stderr};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    pub master_seed: u64,
    pub moment_orders: Vec<u32>,
    /// Defaults to `[t_end/4, 3 t_end/4]`.
    pub fit_window: Option<(f64, f64)>,
    pub burn_in_fraction: f64,
    pub delta_ladder: Vec<f64>,
    /// Number of equally spaced observation times on `[0, t_end]`.
    pub n_obs: usize,
    /// Worker threads (0 uses the global pool). Does not affect results.
    #[serde(skip)]
    pub threads: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_paths: 64,
            master_seed: 0,
            moment_orders: vec![1, 2, 3],
            fit_window: None,
            burn_in_fraction: 0.5,
            delta_ladder: vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
            n_obs: 201,
            threads: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self, t_end: f64) -> Result<()> {
        let bad = |field: &str, msg: String| Err(SepError::Config { field: format!("ensemble.{field}"), msg });
        if self.n_paths < 2 {
            return bad("n_paths", format!("need at least 2 paths, got {}", self.n_paths));
        }
        if self.moment_orders.is_empty() || self.moment_orders.contains(&0) {
            return bad("moment_orders", "orders must be positive integers".into());
        }
        let mut sorted = self.moment_orders.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.moment_orders.len() {
            return bad("moment_orders", "orders must be distinct".into());
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return bad("burn_in_fraction", format!("must lie in [0, 1), got {}", self.burn_in_fraction));
        }
        if self.n_obs < 2 {
            return bad("n_obs", "need at least 2 observation times".into());
        }
        if self.delta_ladder.iter().any(|d| !(*d > 0.0)) {
            return bad("delta_ladder", "entries must be positive".into());
        }
        let (lo, hi) = self.window(t_end);
        if !(lo < hi && hi <= t_end && lo >= 0.0) {
            return bad("fit_window", format!("need 0 <= t_lo < t_hi <= t_end, got ({lo}, {hi})"));
        }
        Ok(())
    }

    pub fn window(&self, t_end: f64) -> (f64, f64) {
        self.fit_window.unwrap_or((0.25 * t_end, 0.75 * t_end))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub zeta_hat: f64,
    pub c_hat: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(t, ln y)` on `window`:
/// `zeta_hat = -slope`, `c_hat = exp(intercept)`.
pub fn fit_decay(t: &[f64], y: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    let mut xs = Vec::new();
    let mut ls = Vec::new();
    for (ti, yi) in t.iter().zip(y) {
        if *ti < window.0 || *ti > window.1 {
            continue;
        }
        if !(*yi > 0.0) {
            return Err(SepError::LogDomain { t: *ti, value: *yi });
        }
        xs.push(*ti);
        ls.push(yi.ln());
    }
    if xs.len() < 10 {
        return Err(SepError::InsufficientData(format!("decay fit needs 10 points in the window, got {}", xs.len())));
    }
    let (slope, intercept, r_squared) = linear_fit(&xs, &ls);
    Ok(DecayFit { zeta_hat: -slope, c_hat: intercept.exp(), r_squared })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRow {
    pub m: u32,
    pub zeta: f64,
    /// `zeta_m / (m zeta_1)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// Every ratio lies in `[0.7, 1.3]`.
    pub consistent: bool,
}

pub fn moment_scaling_report(fits: &[(u32, DecayFit)]) -> Result<ScalingReport> {
    let zeta1 = fits.iter().find(|(m, _)| *m == 1).ok_or(SepError::ReferenceMissing)?.1.zeta_hat;
    let rows: Vec<ScalingRow> = fits
        .iter()
        .map(|(m, f)| ScalingRow { m: *m, zeta: f.zeta_hat, ratio: f.zeta_hat / (*m as f64 * zeta1) })
        .collect();
    let consistent = rows.iter().all(|r| (0.7..=1.3).contains(&r.ratio));
    Ok(ScalingReport { rows, consistent })
}

/// Time-weighted occupation statistics after `burn_in`, accumulated step by
/// step with left-endpoint weights.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationAccumulator {
    burn_in: f64,
    ladder: Vec<f64>,
    time: f64,
    composite: f64,
    sigma_sup: f64,
    occupied: Vec<f64>,
    last: Option<(f64, f64, f64)>,
}

impl OccupationAccumulator {
    pub fn new(burn_in: f64, ladder: &[f64]) -> Self {
        Self {
            burn_in,
            ladder: ladder.to_vec(),
            time: 0.0,
            composite: 0.0,
            sigma_sup: 0.0,
            occupied: vec![0.0; ladder.len()],
            last: None,
        }
    }

    pub fn push(&mut self, frame: &DiagnosticFrame) {
        if let Some((t0, comp, sup)) = self.last {
            let w = frame.t - t0.max(self.burn_in);
            if w > 0.0 {
                self.time += w;
                self.composite += w * comp;
                self.sigma_sup += w * sup;
                for (o, d) in self.occupied.iter_mut().zip(&self.ladder) {
                    if sup <= *d {
                        *o += w;
                    }
                }
            }
        }
        self.last = Some((frame.t, frame.composite, frame.sigma_sup));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LadderRow {
    pub delta: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantStats {
    pub burn_in: f64,
    /// Time average of the composite statistic, pooled over paths.
    pub mean_composite: f64,
    /// Standard error across per-path time averages.
    pub mean_composite_stderr: f64,
    /// Time average of `|rho - rhobar|_inf`.
    pub mean_sigma_sup: f64,
    pub ladder: Vec<LadderRow>,
}

/// Pools the accumulators of several paths.
pub fn pool_occupation(accs: &[OccupationAccumulator]) -> Result<InvariantStats> {
    let first = accs.first().ok_or_else(|| SepError::InsufficientData("no paths".into()))?;
    let total: f64 = accs.iter().map(|a| a.time).sum();
    if !(total > 0.0) {
        return Err(SepError::InsufficientData("no time after burn-in".into()));
    }
    let per_path: Vec<f64> = accs.iter().filter(|a| a.time > 0.0).map(|a| a.composite / a.time).collect();
    let (_, se) = mean_stderr(&per_path);
    let ladder = first
        .ladder
        .iter()
        .enumerate()
        .map(|(k, d)| LadderRow { delta: *d, fraction: accs.iter().map(|a| a.occupied[k]).sum::<f64>() / total })
        .collect();
    Ok(InvariantStats {
        burn_in: first.burn_in,
        mean_composite: accs.iter().map(|a| a.composite).sum::<f64>() / total,
        mean_composite_stderr: se,
        mean_sigma_sup: accs.iter().map(|a| a.sigma_sup).sum::<f64>() / total,
        ladder,
    })
}

/// Occupation statistics of complete path records after `burn_in`.
pub fn invariant_concentration(paths: &[PathRecord], burn_in: f64, delta_ladder: &[f64]) -> Result<InvariantStats> {
    let accs: Vec<OccupationAccumulator> = paths
        .iter()
        .map(|p| {
            let mut acc = OccupationAccumulator::new(burn_in, delta_ladder);
            p.frames.iter().for_each(|f| acc.push(f));
            acc
        })
        .collect();
    pool_occupation(&accs)
}

/// What one path contributes to the ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    /// Composite statistic at the observation times (linear interpolation).
    pub composite: Vec<f64>,
    /// `sup_{[t, t_end]}` of the composite at the observation times.
    pub tail_sup: Vec<f64>,
    pub occupation: OccupationAccumulator,
    pub initial_sigma_sup: f64,
    pub supersonic_steps: usize,
    pub failure: Option<String>,
}

fn observation_times(t_end: f64, n_obs: usize) -> Vec<f64> {
    (0..n_obs).map(|q| if q + 1 == n_obs { t_end } else { t_end * q as f64 / (n_obs - 1) as f64 }).collect()
}

pub fn run_path(
    problem: &Problem,
    initial: &FlowField,
    icfg: &IntegratorConfig,
    noise: &NoiseModel,
    obs: &[f64],
    burn_in: f64,
    ladder: &[f64],
) -> Result<PathSummary> {
    let mut ts = Vec::new();
    let mut xs = Vec::new();
    let mut occupation = OccupationAccumulator::new(burn_in, ladder);
    let mut initial_sigma_sup = 0.0;
    let summary = integrate(problem, initial, icfg, noise, |k, _, f| {
        if k == 0 {
            initial_sigma_sup = f.sigma_sup;
        }
        ts.push(f.t);
        xs.push(f.composite);
        occupation.push(f);
    })?;

    let mut composite = Vec::with_capacity(obs.len());
    let mut k = 0;
    for &tau in obs {
        while k + 1 < ts.len() && ts[k + 1] < tau {
            k += 1;
        }
        let v = if k + 1 < ts.len() {
            let w = ((tau - ts[k]) / (ts[k + 1] - ts[k])).clamp(0.0, 1.0);
            xs[k] * (1.0 - w) + xs[k + 1] * w
        } else {
            xs[k]
        };
        composite.push(v);
    }
    // tail sup: interpolated value at tau, then every step value after it
    let mut tail_sup = vec![0.0; obs.len()];
    let mut running = f64::NEG_INFINITY;
    let mut k = ts.len();
    for q in (0..obs.len()).rev() {
        while k > 0 && ts[k - 1] >= obs[q] {
            k -= 1;
            running = running.max(xs[k]);
        }
        tail_sup[q] = running.max(composite[q]);
    }
    Ok(PathSummary {
        composite,
        tail_sup,
        occupation,
        initial_sigma_sup,
        supersonic_steps: summary.supersonic_steps,
        failure: summary.failure.map(|f| format!("t = {}: {}", f.t_last, f.error)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCurve {
    pub m: u32,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitEntry {
    pub m: u32,
    pub zeta_hat: Option<f64>,
    pub c_hat: Option<f64>,
    pub r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl FitEntry {
    fn new(m: u32, fit: Result<DecayFit>) -> Self {
        match fit {
            Ok(f) => Self { m, zeta_hat: Some(f.zeta_hat), c_hat: Some(f.c_hat), r2: Some(f.r_squared), error: None },
            Err(e) => Self { m, zeta_hat: None, c_hat: None, r2: None, error: Some(e.to_string()) },
        }
    }

    pub fn fit(&self) -> Option<DecayFit> {
        Some(DecayFit { zeta_hat: self.zeta_hat?, c_hat: self.c_hat?, r_squared: self.r2? })
    }
}

/// Fraction of paths whose tail sup at `t` exceeds `(2 c e^{-zeta t})^{1/m}`,
/// with `(zeta, c)` the tail-sup fit of the largest order `m`. Markov's
/// inequality bounds the fraction by 1/2.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChebyshevCheck {
    pub m: u32,
    pub t: f64,
    pub threshold: f64,
    pub fraction_above: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub ensemble: EnsembleConfig,
    pub t_end: f64,
    pub fit_window: (f64, f64),
    pub n_failed: usize,
    pub partial: bool,
    pub failures: Vec<String>,
    pub supersonic_steps: usize,
    /// Mean over paths of `|rho(0) - rhobar|_inf`.
    pub initial_sigma_sup: f64,
    pub moments: Vec<MomentCurve>,
    pub fits: Vec<FitEntry>,
    pub tail_moments: Vec<MomentCurve>,
    pub tail_fits: Vec<FitEntry>,
    pub scaling: Vec<ScalingRow>,
    pub scaling_consistent: Option<bool>,
    pub chebyshev: Option<ChebyshevCheck>,
    pub invariant: Option<InvariantStats>,
}

fn moment_curves(series: &[&Vec<f64>], times: &[f64], orders: &[u32]) -> Vec<MomentCurve> {
    orders
        .iter()
        .map(|&m| {
            let mut values = Vec::with_capacity(times.len());
            let mut stderr = Vec::with_capacity(times.len());
            for q in 0..times.len() {
                let xs: Vec<f64> = series.iter().map(|s| s[q].powi(m as i32)).collect();
                let (mean, se) = mean_stderr(&xs);
                values.push(mean);
                stderr.push(se);
            }
            MomentCurve { m, times: times.to_vec(), values, stderr }
        })
        .collect()
}

/// Runs `n_paths` independent paths from the common `initial` state.
/// Path `p` draws its noise from stream `p` of `master_seed`; results do not
/// depend on the number of worker threads.
pub fn run_ensemble(
    problem: &Problem,
    initial: &FlowField,
    icfg: &IntegratorConfig,
    noise: &NoiseModel,
    cfg: &EnsembleConfig,
) -> Result<EnsembleSummary> {
    icfg.validate()?;
    let t_end = icfg.t_end;
    cfg.validate(t_end)?;
    let obs = observation_times(t_end, cfg.n_obs);
    let burn_in = cfg.burn_in_fraction * t_end;
    let work = |p: usize| {
        let pc = IntegratorConfig { seed: cfg.master_seed, stream: p as u64, ..icfg.clone() };
        run_path(problem, initial, &pc, noise, &obs, burn_in, &cfg.delta_ladder)
    };
    let results: Vec<Result<PathSummary>> = if cfg.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| SepError::Io(e.to_string()))?;
        pool.install(|| (0..cfg.n_paths).into_par_iter().map(work).collect())
    } else {
        (0..cfg.n_paths).into_par_iter().map(work).collect()
    };
    let paths: Vec<PathSummary> = results.into_iter().collect::<Result<_>>()?;
    summarize(&paths, &obs, t_end, cfg)
}

fn summarize(paths: &[PathSummary], obs: &[f64], t_end: f64, cfg: &EnsembleConfig) -> Result<EnsembleSummary> {
    let failures: Vec<String> =
        paths.iter().enumerate().filter_map(|(i, p)| p.failure.as_ref().map(|f| format!("path {i}: {f}"))).collect();
    let ok: Vec<&PathSummary> = paths.iter().filter(|p| p.failure.is_none()).collect();
    let n_failed = failures.len();
    let partial = n_failed as f64 > 0.05 * paths.len() as f64;
    let window = cfg.window(t_end);

    let inst: Vec<&Vec<f64>> = ok.iter().map(|p| &p.composite).collect();
    let tails: Vec<&Vec<f64>> = ok.iter().map(|p| &p.tail_sup).collect();
    let (moments, tail_moments) = if ok.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        (moment_curves(&inst, obs, &cfg.moment_orders), moment_curves(&tails, obs, &cfg.moment_orders))
    };
    let fits: Vec<FitEntry> = moments.iter().map(|c| FitEntry::new(c.m, fit_decay(obs, &c.values, window))).collect();
    let tail_fits: Vec<FitEntry> =
        tail_moments.iter().map(|c| FitEntry::new(c.m, fit_decay(obs, &c.values, window))).collect();

    let collect = |fs: &[FitEntry]| -> Option<Vec<(u32, DecayFit)>> { fs.iter().map(|f| f.fit().map(|d| (f.m, d))).collect() };
    let scaling = collect(&fits).and_then(|f| moment_scaling_report(&f).ok());

    let chebyshev = collect(&tail_fits).and_then(|f| {
        let (m, fit) = f.iter().max_by_key(|(m, _)| *m)?;
        let t = window.1;
        let q = obs.iter().position(|tau| *tau >= t)?;
        let mf = *m as f64;
        let threshold = (2.0 * fit.c_hat * (-fit.zeta_hat * t).exp()).powf(1.0 / mf);
        let above = ok.iter().filter(|p| p.tail_sup[q] > threshold).count();
        let fraction_above = above as f64 / ok.len() as f64;
        Some(ChebyshevCheck { m: *m, t, threshold, fraction_above, passed: fraction_above <= 0.5 })
    });

    let accs: Vec<OccupationAccumulator> = ok.iter().map(|p| p.occupation.clone()).collect();
    let invariant = pool_occupation(&accs).ok();
    let initial_sigma_sup = if ok.is_empty() {
        f64::NAN
    } else {
        ok.iter().map(|p| p.initial_sigma_sup).sum::<f64>() / ok.len() as f64
    };

    Ok(EnsembleSummary {
        ensemble: cfg.clone(),
        t_end,
        fit_window: window,
        n_failed,
        partial,
        failures,
        supersonic_steps: paths.iter().map(|p| p.supersonic_steps).sum(),
        initial_sigma_sup,
        moments,
        fits,
        tail_moments,
        tail_fits,
        scaling_consistent: scaling.as_ref().map(|s| s.consistent),
        scaling: scaling.map(|s| s.rows).unwrap_or_default(),
        chebyshev,
        invariant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic(noise: f64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t: Vec<f64> = (0..=200).map(|i| i as f64 * 0.1).collect();
        let y = t
            .iter()
            .map(|ti| 5.0 * (-0.3 * ti).exp() * (1.0 + noise * rng.random_range(-1.0..1.0)))
            .collect();
        (t, y)
    }

    #[test]
    fn exact_exponential_recovered() {
        let (t, y) = synthetic(0.0);
        let f = fit_decay(&t, &y, (0.0, 20.0)).unwrap();
        assert!((f.zeta_hat - 0.3).abs() < 1e-10);
        assert!((f.c_hat - 5.0).abs() < 1e-9);
        assert!(f.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn noisy_exponential_within_five_percent() {
        let (t, y) = synthetic(0.01);
        let f = fit_decay(&t, &y, (0.0, 20.0)).unwrap();
        assert!((f.zeta_hat - 0.3).abs() < 0.05 * 0.3);
        assert!(f.r_squared > 0.99);
    }

    #[test]
    fn constant_series_has_zero_rate() {
        let t: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let f = fit_decay(&t, &vec![2.0; 50], (0.0, 49.0)).unwrap();
        assert!(f.zeta_hat.abs() < 1e-12);
    }

    #[test]
    fn fit_errors() {
        let t: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let mut y = vec![1.0; 50];
        y[20] = 0.0;
        assert!(matches!(fit_decay(&t, &y, (0.0, 49.0)), Err(SepError::LogDomain { .. })));
        assert!(matches!(fit_decay(&t, &[1.0; 50], (0.0, 5.0)), Err(SepError::InsufficientData(_))));
    }

    fn fit(z: f64) -> DecayFit {
        DecayFit { zeta_hat: z, c_hat: 1.0, r_squared: 1.0 }
    }

    #[test]
    fn scaling_table() {
        let r = moment_scaling_report(&[(1, fit(0.3)), (2, fit(0.6)), (3, fit(0.9))]).unwrap();
        assert!(r.rows.iter().all(|row| (row.ratio - 1.0).abs() < 1e-12));
        assert!(r.consistent);
        let r = moment_scaling_report(&[(1, fit(0.3)), (2, fit(0.5))]).unwrap();
        assert!((r.rows[1].ratio - 0.5 / 0.6).abs() < 1e-12 && r.consistent);
        let r = moment_scaling_report(&[(1, fit(0.3)), (2, fit(0.1))]).unwrap();
        assert!((r.rows[1].ratio - 0.1 / 0.6).abs() < 1e-12 && !r.consistent);
        assert_eq!(moment_scaling_report(&[(2, fit(0.1))]), Err(SepError::ReferenceMissing));
    }

    #[test]
    fn config_validation_names_fields() {
        let mut c = EnsembleConfig { moment_orders: vec![0, 1], ..Default::default() };
        assert!(matches!(c.validate(10.0), Err(SepError::Config { field, .. }) if field == "ensemble.moment_orders"));
        c.moment_orders = vec![1, 1];
        assert!(c.validate(10.0).is_err());
        c.moment_orders = vec![1, 2];
        c.fit_window = Some((5.0, 12.0));
        assert!(matches!(c.validate(10.0), Err(SepError::Config { field, .. }) if field == "ensemble.fit_window"));
    }
}
