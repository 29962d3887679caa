use std::f64::consts::PI;

use rand::Rng;

use crate::diagnostics::DiagnosticFrame;
use crate::error::{Result, SepError};
use crate::integrator::noise::{stream_rng, NoiseModel, NoisePath};
use crate::integrator::scheme::{cfl_dt, max_speed, step_with_normals, SchemeOptions};
use crate::model::poisson::solve_poisson;
use crate::model::FlowField;
use crate::perturbation::PerturbationState;
use crate::problem::Problem;

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub scheme: SchemeOptions,
    pub t_end: f64,
    /// Keep every `snapshot_every`-th state (0 keeps none).
    pub snapshot_every: usize,
    pub seed: u64,
    /// RNG stream (path index).
    pub stream: u64,
    /// Fixed step instead of the CFL step; must respect `h / max speed`.
    pub dt: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { scheme: SchemeOptions::default(), t_end: 10.0, snapshot_every: 0, seed: 0, stream: 0, dt: None }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(SepError::Config { field: "time.t_end".into(), msg: "must be finite and >= 0".into() });
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(SepError::Config { field: "time.dt".into(), msg: "must be > 0".into() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathFailure {
    /// Time of the last accepted state.
    pub t_last: f64,
    pub error: SepError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub frames: Vec<DiagnosticFrame>,
    /// `(step index, state)`.
    pub snapshots: Vec<(usize, FlowField)>,
    pub failure: Option<PathFailure>,
    /// Accepted steps that ended with a nonpositive subsonic margin.
    pub supersonic_steps: usize,
}

impl PathRecord {
    pub fn steps(&self) -> usize {
        self.frames.len().saturating_sub(1)
    }

    pub fn snapshot_states(&self) -> Vec<FlowField> {
        self.snapshots.iter().map(|(_, s)| s.clone()).collect()
    }
}

/// Outcome of [`integrate`] apart from what the observer saw.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationSummary {
    pub steps: usize,
    pub failure: Option<PathFailure>,
    pub supersonic_steps: usize,
    pub final_state: FlowField,
}

/// Advances `initial` to `t_end`, calling `observer(step, state, frame)` on
/// the initial state and after every accepted step. Noise comes from
/// `stream_rng(seed, stream)`.
pub fn integrate<F>(
    problem: &Problem,
    initial: &FlowField,
    cfg: &IntegratorConfig,
    noise: &NoiseModel,
    mut observer: F,
) -> Result<IntegrationSummary>
where
    F: FnMut(usize, &FlowField, &DiagnosticFrame),
{
    cfg.validate()?;
    problem.grid.check(&initial.rho)?;
    let mut rng = stream_rng(cfg.seed, cfg.stream);
    let mut state = initial.clone();
    let mut frame = DiagnosticFrame::compute(problem, &state, 0.0)?;
    observer(0, &state, &frame);

    let mut steps = 0;
    let mut supersonic_steps = 0;
    let mut failure = None;
    let mut xi = Vec::with_capacity(noise.normals_per_step());
    let t_end = cfg.t_end;
    while state.t < t_end {
        let dt = match next_dt(problem, &state, cfg) {
            Ok(dt) => dt,
            Err(error) => {
                failure = Some(PathFailure { t_last: state.t, error });
                break;
            }
        };
        let remaining = t_end - state.t;
        let last = dt >= remaining * (1.0 - 1e-12);
        let dt = if last { remaining } else { dt };
        xi.clear();
        if !noise.is_off() {
            noise.draw_normals(&mut rng, &mut xi);
        }
        match step_with_normals(problem, &cfg.scheme, noise, &state, dt, &xi) {
            Ok((mut next, info)) => {
                if last {
                    next.t = t_end;
                }
                if info.supersonic {
                    supersonic_steps += 1;
                }
                steps += 1;
                match DiagnosticFrame::compute(problem, &next, frame.running_sup_composite) {
                    Ok(f) => frame = f,
                    Err(error) => {
                        failure = Some(PathFailure { t_last: state.t, error });
                        break;
                    }
                }
                state = next;
                observer(steps, &state, &frame);
            }
            Err(error) => {
                failure = Some(PathFailure { t_last: state.t, error });
                break;
            }
        }
    }
    Ok(IntegrationSummary { steps, failure, supersonic_steps, final_state: state })
}

fn next_dt(problem: &Problem, state: &FlowField, cfg: &IntegratorConfig) -> Result<f64> {
    match cfg.dt {
        Some(dt) => {
            let (speed, _) = max_speed(state, &problem.law)?;
            let bound = problem.grid.h() / speed;
            if dt > bound {
                return Err(SepError::StepSize { dt, bound });
            }
            Ok(dt)
        }
        None => cfl_dt(&problem.grid, state, &problem.law, &cfg.scheme),
    }
}

/// Runs one path and keeps every diagnostic frame plus the requested snapshots.
pub fn simulate(problem: &Problem, initial: &FlowField, cfg: &IntegratorConfig, noise: &NoiseModel) -> Result<PathRecord> {
    let mut times = Vec::new();
    let mut frames = Vec::new();
    let mut snapshots = Vec::new();
    let every = cfg.snapshot_every;
    let summary = integrate(problem, initial, cfg, noise, |k, s, f| {
        times.push(s.t);
        frames.push(*f);
        if every > 0 && k % every == 0 {
            snapshots.push((k, s.clone()));
        }
    })?;
    Ok(PathRecord { times, frames, snapshots, failure: summary.failure, supersonic_steps: summary.supersonic_steps })
}

/// Initial data `sigma0 = eps sum c_i sin(i pi x)`, `j0 = eps sum d_i cos(i pi x)`
/// with `c_i, d_i` uniform on `[-1, 1]`, scaled so that
/// `|(sigma0, j0)|_{H2} = eps`. The ends of `j0` are reset so that the
/// one-sided `j_x` vanishes there.
pub fn initial_perturbation<R: Rng + ?Sized>(
    problem: &Problem,
    amplitude: f64,
    n_modes: usize,
    rng: &mut R,
) -> Result<(FlowField, PerturbationState)> {
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(SepError::Domain(format!("perturbation amplitude must be >= 0, got {amplitude}")));
    }
    let grid = &problem.grid;
    if amplitude == 0.0 || n_modes == 0 {
        let pert = PerturbationState::zero(grid);
        return Ok((problem.rest.clone(), pert));
    }
    let c: Vec<f64> = (0..n_modes).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let d: Vec<f64> = (0..n_modes).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let n = grid.n_cells();
    let mut sigma = grid.sample(|x| (0..n_modes).map(|i| c[i] * ((i + 1) as f64 * PI * x).sin()).sum());
    sigma[0] = 0.0;
    sigma[n] = 0.0;
    let mut j = grid.sample(|x| (0..n_modes).map(|i| d[i] * ((i + 1) as f64 * PI * x).cos()).sum());
    j[0] = (4.0 * j[1] - j[2]) / 3.0;
    j[n] = (4.0 * j[n - 1] - j[n - 2]) / 3.0;
    let norm = (grid.h2_sq(&sigma) + grid.h2_sq(&j)).sqrt();
    let scale = amplitude / norm;
    sigma.iter_mut().for_each(|v| *v *= scale);
    j.iter_mut().for_each(|v| *v *= scale);

    let rho: Vec<f64> = problem.rest.rho.iter().zip(&sigma).map(|(r, s)| r + s).collect();
    let current: Vec<f64> = problem.rest.current.iter().zip(&j).map(|(r, s)| r + s).collect();
    let flow0 = FlowField { rho, current, phi: vec![], efield: vec![], t: 0.0 };
    flow0.check_positive()?;
    let phi = solve_poisson(grid, &flow0.rho, &problem.doping, &problem.contact)?;
    let efield = grid.dx(&phi);
    let flow = FlowField { phi, efield, ..flow0 };
    let pert = PerturbationState::from_flow(problem, &flow);
    Ok((flow, pert))
}

/// Integrates with a fixed step on a frozen noise path and returns the
/// perturbation at every step.
pub fn integrate_on_path(
    problem: &Problem,
    opts: &SchemeOptions,
    noise: &NoiseModel,
    initial: &FlowField,
    path: &NoisePath,
) -> Result<Vec<PerturbationState>> {
    let mut out = Vec::with_capacity(path.steps() + 1);
    let mut state = initial.clone();
    out.push(PerturbationState::from_flow(problem, &state));
    for xi in &path.normals {
        let (next, _) = step_with_normals(problem, opts, noise, &state, path.dt, xi)?;
        state = next;
        out.push(PerturbationState::from_flow(problem, &state));
    }
    Ok(out)
}
