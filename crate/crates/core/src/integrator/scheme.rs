//! One time step of the stochastically forced Euler-Poisson system.
//!
//! Drift: local Lax-Friedrichs fluxes for `(J, J^2/rho + P)`, centered source
//! `rho E`, relaxation `-J` treated semi-implicitly (division by `1 + dt`).
//! Optional linear reconstruction of face states, paired with a Heun (SSP-RK2)
//! drift update. Noise is added to the momentum after the drift (Lie
//! splitting), with the diffusion coefficient frozen at the start of the step.

use crate::error::{Result, SepError};
use crate::integrator::noise::NoiseModel;
use crate::model::poisson::solve_dirichlet;
use crate::model::{FlowField, Grid, PressureLaw};
use crate::problem::Problem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeOptions {
    pub cfl: f64,
    /// Extra diffusion `mu * U_xx` on both equations (0 disables it).
    pub artificial_viscosity: f64,
    /// Linear face reconstruction with a Heun drift step.
    pub reconstruction: bool,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self { cfl: 0.4, artificial_viscosity: 0.0, reconstruction: false }
    }
}

impl SchemeOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(SepError::Config { field: "time.cfl".into(), msg: format!("must lie in (0, 1), got {}", self.cfl) });
        }
        if !(self.artificial_viscosity >= 0.0) {
            return Err(SepError::Config {
                field: "time.artificial_viscosity".into(),
                msg: "must be >= 0".into(),
            });
        }
        Ok(())
    }
}

/// Largest characteristic speed `|J/rho| + sqrt(P'(rho))` and its node.
pub fn max_speed(state: &FlowField, law: &PressureLaw) -> Result<(f64, usize)> {
    state.check_positive()?;
    let mut best = (0.0, 0);
    for (i, (r, j)) in state.rho.iter().zip(&state.current).enumerate() {
        let s = (j / r).abs() + law.sound_speed(*r);
        if s > best.0 {
            best = (s, i);
        }
    }
    Ok(best)
}

/// Time step `cfl * h / max speed` (further limited by `cfl h^2 / (2 mu)` when
/// artificial viscosity is on).
pub fn cfl_dt(grid: &Grid, state: &FlowField, law: &PressureLaw, opts: &SchemeOptions) -> Result<f64> {
    let (speed, _) = max_speed(state, law)?;
    let h = grid.h();
    let mut dt = opts.cfl * h / speed;
    if opts.artificial_viscosity > 0.0 {
        dt = dt.min(opts.cfl * h * h / (2.0 * opts.artificial_viscosity));
    }
    Ok(dt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub min_subsonic_margin: f64,
    pub supersonic: bool,
}

/// Sets the Ohmic density values and extrapolates the current so that the
/// one-sided second-order `J_x` vanishes at both ends.
pub fn enforce_boundaries(state: &mut FlowField, rho_left: f64, rho_right: f64) {
    let n = state.rho.len() - 1;
    state.rho[0] = rho_left;
    state.rho[n] = rho_right;
    let j = &mut state.current;
    j[0] = (4.0 * j[1] - j[2]) / 3.0;
    j[n] = (4.0 * j[n - 1] - j[n - 2]) / 3.0;
}

/// Re-solves Poisson for the potential and updates the field.
pub fn update_potential(problem: &Problem, state: &mut FlowField) {
    let bd = &problem.contact;
    let source: Vec<f64> = state.rho.iter().zip(problem.doping.values()).map(|(r, b)| r - b).collect();
    state.phi = solve_dirichlet(&problem.grid, &source, bd.phi_left, bd.phi_right);
    problem.grid.dx_into(&state.phi, &mut state.efield);
}

#[inline]
fn flux(law: &PressureLaw, rho: f64, j: f64) -> (f64, f64) {
    (j, j * j / rho + law.p(rho))
}

#[inline]
fn speed(law: &PressureLaw, rho: f64, j: f64) -> f64 {
    (j / rho).abs() + law.sound_speed(rho)
}

/// Local Lax-Friedrichs wave speed on each face `i + 1/2`, first-order states.
pub fn face_speeds(law: &PressureLaw, state: &FlowField) -> Vec<f64> {
    let (rho, j) = (&state.rho, &state.current);
    (0..rho.len() - 1)
        .map(|f| speed(law, rho[f], j[f]).max(speed(law, rho[f + 1], j[f + 1])))
        .collect()
}

/// Explicit part of the drift at interior nodes: `(d rho/dt, d J/dt + J)`,
/// i.e. everything except the relaxation term. End entries are zero.
pub fn explicit_drift(problem: &Problem, opts: &SchemeOptions, state: &FlowField) -> (Vec<f64>, Vec<f64>) {
    let law = &problem.law;
    let grid = &problem.grid;
    let n = grid.n_cells();
    let inv_h = n as f64;
    let (rho, j) = (&state.rho, &state.current);

    let mut f_rho = vec![0.0; n];
    let mut f_j = vec![0.0; n];
    let slopes = |u: &[f64]| -> Vec<f64> {
        let mut s = vec![0.0; n + 1];
        s[0] = u[1] - u[0];
        for i in 1..n {
            s[i] = 0.5 * (u[i + 1] - u[i - 1]);
        }
        s[n] = u[n] - u[n - 1];
        s
    };
    let (s_rho, s_j) = if opts.reconstruction { (slopes(rho), slopes(j)) } else { (Vec::new(), Vec::new()) };

    for f in 0..n {
        let (mut rl, mut jl, mut rr, mut jr) = (rho[f], j[f], rho[f + 1], j[f + 1]);
        if opts.reconstruction {
            let cand = (
                rho[f] + 0.5 * s_rho[f],
                j[f] + 0.5 * s_j[f],
                rho[f + 1] - 0.5 * s_rho[f + 1],
                j[f + 1] - 0.5 * s_j[f + 1],
            );
            if cand.0 > 0.0 && cand.2 > 0.0 {
                (rl, jl, rr, jr) = cand;
            }
        }
        let alpha = speed(law, rl, jl).max(speed(law, rr, jr));
        let (fl0, fl1) = flux(law, rl, jl);
        let (fr0, fr1) = flux(law, rr, jr);
        f_rho[f] = 0.5 * (fl0 + fr0) - 0.5 * alpha * (rr - rl);
        f_j[f] = 0.5 * (fl1 + fr1) - 0.5 * alpha * (jr - jl);
    }

    let mu = opts.artificial_viscosity;
    let inv_h2 = inv_h * inv_h;
    let mut d_rho = vec![0.0; n + 1];
    let mut d_j = vec![0.0; n + 1];
    for i in 1..n {
        d_rho[i] = -(f_rho[i] - f_rho[i - 1]) * inv_h;
        d_j[i] = -(f_j[i] - f_j[i - 1]) * inv_h + rho[i] * state.efield[i];
        if mu > 0.0 {
            d_rho[i] += mu * (rho[i - 1] - 2.0 * rho[i] + rho[i + 1]) * inv_h2;
            d_j[i] += mu * (j[i - 1] - 2.0 * j[i] + j[i + 1]) * inv_h2;
        }
    }
    (d_rho, d_j)
}

/// Forward-Euler drift stage with semi-implicit relaxation, boundary
/// enforcement and a Poisson solve.
fn drift_stage(problem: &Problem, opts: &SchemeOptions, state: &FlowField, dt: f64) -> FlowField {
    let (d_rho, d_j) = explicit_drift(problem, opts, state);
    let n = problem.grid.n_cells();
    let mut next = state.clone();
    let relax = 1.0 / (1.0 + dt);
    for i in 1..n {
        next.rho[i] = state.rho[i] + dt * d_rho[i];
        next.current[i] = (state.current[i] + dt * d_j[i]) * relax;
    }
    enforce_boundaries(&mut next, problem.contact.rho_left, problem.contact.rho_right);
    update_potential(problem, &mut next);
    next
}

/// Advances `state` by `dt` using the given standard normals for the noise.
pub fn step_with_normals(
    problem: &Problem,
    opts: &SchemeOptions,
    noise: &NoiseModel,
    state: &FlowField,
    dt: f64,
    normals: &[f64],
) -> Result<(FlowField, StepInfo)> {
    let n = problem.grid.n_cells();
    let mut next = if opts.reconstruction {
        let u1 = drift_stage(problem, opts, state, dt);
        u1.check_positive()?;
        let u2 = drift_stage(problem, opts, &u1, dt);
        let mut avg = state.clone();
        for i in 1..n {
            avg.rho[i] = 0.5 * (state.rho[i] + u2.rho[i]);
            avg.current[i] = 0.5 * (state.current[i] + u2.current[i]);
        }
        enforce_boundaries(&mut avg, problem.contact.rho_left, problem.contact.rho_right);
        update_potential(problem, &mut avg);
        avg
    } else {
        drift_stage(problem, opts, state, dt)
    };

    if !noise.is_off() {
        let mut dm = vec![0.0; n + 1];
        noise.increment_from_normals(&state.current, dt, normals, &mut dm);
        for i in 1..n {
            next.current[i] += dm[i];
        }
        let (rl, rr) = (problem.contact.rho_left, problem.contact.rho_right);
        enforce_boundaries(&mut next, rl, rr);
    }
    next.check_positive()?;
    next.t = state.t + dt;

    let law = &problem.law;
    let min_subsonic_margin = next
        .rho
        .iter()
        .zip(&next.current)
        .map(|(r, j)| law.subsonic_margin(*r, *j))
        .fold(f64::INFINITY, f64::min);
    Ok((next, StepInfo { min_subsonic_margin, supersonic: !(min_subsonic_margin > 0.0) }))
}

/// Advances `state` by `dt`, drawing the noise from `rng`.
pub fn step<R: rand::Rng + ?Sized>(
    problem: &Problem,
    opts: &SchemeOptions,
    noise: &NoiseModel,
    state: &FlowField,
    dt: f64,
    rng: &mut R,
) -> Result<(FlowField, StepInfo)> {
    let mut xi = Vec::new();
    if !noise.is_off() {
        noise.draw_normals(rng, &mut xi);
    }
    step_with_normals(problem, opts, noise, state, dt, &xi)
}
