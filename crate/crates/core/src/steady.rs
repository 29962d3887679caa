//! Subsonic steady states of the Euler-Poisson system with Ohmic contacts.
//!
//! The density solves the scalar elliptic equation obtained by dividing the
//! steady momentum balance by `rho` and differentiating:
//!
//! ```text
//! a(rho) rho_xx + a'(rho) rho_x^2 - (J / rho^2) rho_x = rho - b,
//! a(rho) = (P'(rho) - J^2 / rho^2) / rho,
//! a'(rho) = 3 J^2 / rho^4 + P''(rho) / rho - P'(rho) / rho^2.
//! ```
//!
//! It is discretized with central differences and solved by damped Newton
//! with an exact tridiagonal Jacobian. The potential is then recovered from
//! the momentum balance `phi_x = ((J^2 / rho + P)_x + J) / rho`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SepError};
use crate::model::tridiag::solve_tridiagonal;
use crate::model::{solve_poisson, BoundaryData, DopingProfile, FlowField, Grid, PressureLaw};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Search interval `|J| <= j_max` in voltage mode.
    pub j_max: f64,
    pub voltage_tol: f64,
    pub max_outer: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            max_halvings: 20,
            j_max: 0.2,
            voltage_tol: 1e-9,
            max_outer: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub grid: Grid,
    pub rho_bar: Vec<f64>,
    pub j_bar: f64,
    pub phi_bar: Vec<f64>,
    pub e_bar: Vec<f64>,
    pub subsonic_margin: f64,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    GivenCurrent,
    GivenVoltage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadySolveReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub mode: SolveMode,
    pub mass_defect: f64,
    /// Current evaluations of the outer voltage iteration (0 in current mode).
    pub outer_iterations: usize,
}

impl SteadyState {
    /// Contact data seen by the time integrator: the prescribed densities and
    /// the potential values attained by the steady state.
    pub fn contact_data(&self) -> BoundaryData {
        let n = self.grid.n_cells();
        BoundaryData {
            rho_left: self.rho_bar[0],
            rho_right: self.rho_bar[n],
            phi_left: self.phi_bar[0],
            phi_right: self.phi_bar[n],
        }
    }

    /// The steady state as a flow field whose potential solves the discrete
    /// Poisson problem, i.e. the rest state of the time integrator.
    pub fn rest_flow(&self, doping: &DopingProfile) -> Result<FlowField> {
        let phi = solve_poisson(&self.grid, &self.rho_bar, doping, &self.contact_data())?;
        let efield = self.grid.dx(&phi);
        Ok(FlowField {
            rho: self.rho_bar.clone(),
            current: vec![self.j_bar; self.grid.n_nodes()],
            phi,
            efield,
            t: 0.0,
        })
    }

    pub fn phi_right(&self) -> f64 {
        self.phi_bar[self.grid.n_cells()]
    }

    pub fn mass_defect(&self, doping: &DopingProfile) -> f64 {
        self.grid.integrate(&self.rho_bar) - self.grid.integrate(doping.values())
    }
}

fn min_margin(grid: &Grid, law: &PressureLaw, rho: &[f64], j: f64) -> (f64, f64) {
    rho.iter()
        .enumerate()
        .map(|(i, r)| (law.subsonic_margin(*r, j), grid.x(i)))
        .fold((f64::INFINITY, 0.0), |acc, v| if v.0 < acc.0 { v } else { acc })
}

fn check_subsonic(grid: &Grid, law: &PressureLaw, rho: &[f64], j: f64) -> Result<f64> {
    let (margin, x) = min_margin(grid, law, rho, j);
    if !(margin > 0.0) {
        return Err(SepError::Supersonic { margin, x });
    }
    Ok(margin)
}

#[inline]
fn coeff_a(law: &PressureLaw, r: f64, j2: f64) -> f64 {
    law.dp(r) / r - j2 / (r * r * r)
}

#[inline]
fn coeff_da(law: &PressureLaw, r: f64, j2: f64) -> f64 {
    3.0 * j2 / r.powi(4) + law.ddp(r) / r - law.dp(r) / (r * r)
}

#[inline]
fn coeff_dda(law: &PressureLaw, r: f64, j2: f64) -> f64 {
    -12.0 * j2 / r.powi(5) + law.dddp(r) / r - 2.0 * law.ddp(r) / (r * r)
        + 2.0 * law.dp(r) / r.powi(3)
}

/// Discrete defect of the density equation at interior nodes (ends are zero).
fn density_residual(grid: &Grid, law: &PressureLaw, b: &[f64], rho: &[f64], j: f64, out: &mut [f64]) {
    let n = grid.n_cells();
    let inv2h = 0.5 * n as f64;
    let inv_h2 = (n * n) as f64;
    let j2 = j * j;
    out[0] = 0.0;
    out[n] = 0.0;
    for i in 1..n {
        let r = rho[i];
        let d1 = (rho[i + 1] - rho[i - 1]) * inv2h;
        let d2 = (rho[i + 1] - 2.0 * r + rho[i - 1]) * inv_h2;
        out[i] = coeff_a(law, r, j2) * d2 + coeff_da(law, r, j2) * d1 * d1 - j / (r * r) * d1 - (r - b[i]);
    }
}

fn sup(v: &[f64]) -> f64 {
    Grid::sup(v)
}

/// Newton solve for the density at fixed current. Returns the density and the
/// residual history (entry 0 is the initial guess).
fn newton_density(
    grid: &Grid,
    law: &PressureLaw,
    b: &[f64],
    rho_left: f64,
    rho_right: f64,
    j: f64,
    opts: &SteadyOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = grid.n_cells();
    let inv2h = 0.5 * n as f64;
    let inv_h2 = (n * n) as f64;
    let j2 = j * j;
    let mut rho = grid.sample(|x| rho_left + (rho_right - rho_left) * x);
    rho[n] = rho_right;
    check_subsonic(grid, law, &rho, j)?;

    let mut res = vec![0.0; n + 1];
    density_residual(grid, law, b, &rho, j, &mut res);
    let mut norm = sup(&res);
    let mut history = vec![norm];

    let m = n - 1;
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut step = vec![0.0; m];
    let mut trial = rho.clone();
    let mut trial_res = vec![0.0; n + 1];

    let mut iter = 0;
    while norm > opts.tol {
        if iter >= opts.max_iter {
            return Err(SepError::NoConvergence { iterations: iter, residual: norm });
        }
        iter += 1;
        for i in 1..n {
            let r = rho[i];
            let d1 = (rho[i + 1] - rho[i - 1]) * inv2h;
            let d2 = (rho[i + 1] - 2.0 * r + rho[i - 1]) * inv_h2;
            let a = coeff_a(law, r, j2);
            let da = coeff_da(law, r, j2);
            let adv = 2.0 * da * d1 - j / (r * r);
            let k = i - 1;
            lower[k] = a * inv_h2 - adv * inv2h;
            upper[k] = a * inv_h2 + adv * inv2h;
            diag[k] = da * d2 - 2.0 * a * inv_h2 + coeff_dda(law, r, j2) * d1 * d1
                + 2.0 * j / (r * r * r) * d1
                - 1.0;
            step[k] = -res[i];
        }
        solve_tridiagonal(&lower, &diag, &upper, &mut step);

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            for i in 1..n {
                trial[i] = rho[i] + lambda * step[i - 1];
            }
            if trial.iter().all(|r| *r > 0.0) {
                density_residual(grid, law, b, &trial, j, &mut trial_res);
                let trial_norm = sup(&trial_res);
                if trial_norm < norm {
                    accepted = true;
                    norm = trial_norm;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            // The residual sits at the rounding floor of the discrete operator;
            // further steps cannot reduce it.
            if sup(&step) <= 1e-13 * sup(&rho) {
                break;
            }
            return Err(SepError::NoConvergence { iterations: iter, residual: norm });
        }
        std::mem::swap(&mut rho, &mut trial);
        std::mem::swap(&mut res, &mut trial_res);
        history.push(norm);
        check_subsonic(grid, law, &rho, j)?;
    }
    Ok((rho, history))
}

/// Steady state at prescribed current `j_bar`; `phi_bar(1)` is an output.
pub fn solve_given_current(
    grid: &Grid,
    law: &PressureLaw,
    doping: &DopingProfile,
    rho_ends: (f64, f64),
    j_bar: f64,
    phi_left: f64,
    opts: &SteadyOptions,
) -> Result<(SteadyState, SteadySolveReport)> {
    grid.check(doping.values())?;
    let (rho_left, rho_right) = rho_ends;
    if !(rho_left > 0.0 && rho_right > 0.0) {
        return Err(SepError::Domain("contact densities must be positive".into()));
    }
    let b = doping.values();
    let (rho, history) = newton_density(grid, law, b, rho_left, rho_right, j_bar, opts)?;

    let flux: Vec<f64> = rho.iter().map(|r| j_bar * j_bar / r + law.p(*r)).collect();
    let flux_x = grid.dx(&flux);
    let e_bar: Vec<f64> = flux_x.iter().zip(&rho).map(|(fx, r)| (fx + j_bar) / r).collect();
    let phi_bar: Vec<f64> = grid.cumulative_integral(&e_bar).into_iter().map(|v| v + phi_left).collect();

    let (subsonic_margin, _) = min_margin(grid, law, &rho, j_bar);
    let residual_norm = *history.last().unwrap();
    let state = SteadyState {
        grid: *grid,
        rho_bar: rho,
        j_bar,
        phi_bar,
        e_bar,
        subsonic_margin,
        residual_norm,
    };
    let report = SteadySolveReport {
        iterations: history.len() - 1,
        residual_history: history,
        mode: SolveMode::GivenCurrent,
        mass_defect: state.mass_defect(doping),
        outer_iterations: 0,
    };
    Ok((state, report))
}

/// Steady state matching both contact potentials: the current is found by
/// bisection with secant acceleration on `phi_bar(1) - phi_right`.
pub fn solve_given_voltage(
    grid: &Grid,
    law: &PressureLaw,
    doping: &DopingProfile,
    bd: &BoundaryData,
    opts: &SteadyOptions,
) -> Result<(SteadyState, SteadySolveReport)> {
    let ends = (bd.rho_left, bd.rho_right);
    let mut evals = 0usize;
    let mut eval = |j: f64| -> Result<(f64, SteadyState, SteadySolveReport)> {
        evals += 1;
        let (s, r) = solve_given_current(grid, law, doping, ends, j, bd.phi_left, opts)?;
        Ok((s.phi_right() - bd.phi_right, s, r))
    };

    let (mut lo, mut hi) = (-opts.j_max, opts.j_max);
    let (mut f_lo, s_lo, r_lo) = eval(lo)?;
    if f_lo.abs() <= opts.voltage_tol {
        return Ok(finish(s_lo, r_lo, evals));
    }
    let (mut f_hi, s_hi, r_hi) = eval(hi)?;
    if f_hi.abs() <= opts.voltage_tol {
        return Ok(finish(s_hi, r_hi, evals));
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(SepError::NoBracket { j_max: opts.j_max, f_lo, f_hi });
    }

    // Secant through the last two iterates, falling back to bisection
    // whenever the secant point leaves the bracket or stalls.
    let (mut prev_j, mut prev_f) = (lo, f_lo);
    let (mut cur_j, mut cur_f) = (hi, f_hi);
    let mut best = None;
    for _ in 0..opts.max_outer {
        let width = hi - lo;
        let mut cand = if cur_f != prev_f {
            cur_j - cur_f * (cur_j - prev_j) / (cur_f - prev_f)
        } else {
            f64::NAN
        };
        let margin = 0.01 * width;
        if !(cand > lo + margin && cand < hi - margin) {
            cand = 0.5 * (lo + hi);
        }
        let (f, s, r) = eval(cand)?;
        if f.abs() <= opts.voltage_tol {
            best = Some((s, r));
            break;
        }
        if f.signum() == f_lo.signum() {
            lo = cand;
            f_lo = f;
        } else {
            hi = cand;
            f_hi = f;
        }
        prev_j = cur_j;
        prev_f = cur_f;
        cur_j = cand;
        cur_f = f;
        if hi - lo <= 1e-15 * opts.j_max {
            break;
        }
    }
    let _ = f_hi;
    match best {
        Some((s, r)) => Ok(finish(s, r, evals)),
        None => Err(SepError::NoConvergence { iterations: evals, residual: cur_f.abs() }),
    }
}

fn finish(state: SteadyState, mut report: SteadySolveReport, evals: usize) -> (SteadyState, SteadySolveReport) {
    report.mode = SolveMode::GivenVoltage;
    report.outer_iterations = evals;
    (state, report)
}

/// Sup norms of the discrete momentum balance
/// `(J^2/rho + P)_x + J - rho E` and of the Poisson defect `phi_xx - (rho - b)`.
pub fn steady_residual(state: &SteadyState, law: &PressureLaw, doping: &DopingProfile) -> (f64, f64) {
    let grid = &state.grid;
    let j = state.j_bar;
    let flux: Vec<f64> = state.rho_bar.iter().map(|r| j * j / r + law.p(*r)).collect();
    let flux_x = grid.dx(&flux);
    let momentum = flux_x
        .iter()
        .zip(&state.rho_bar)
        .zip(&state.e_bar)
        .map(|((fx, r), e)| (fx + j - r * e).abs())
        .fold(0.0, f64::max);
    let poisson =
        crate::model::poisson_residual(grid, &state.phi_bar, &state.rho_bar, doping.values());
    (momentum, poisson)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law() -> PressureLaw {
        PressureLaw::new(2.0, 1.0).unwrap()
    }

    #[test]
    fn constant_state_is_exact() {
        let g = Grid::new(200).unwrap();
        let b = DopingProfile::constant(&g, 1.0).unwrap();
        let (s, rep) = solve_given_current(&g, &law(), &b, (1.0, 1.0), 0.0, 0.0, &Default::default()).unwrap();
        assert!(s.rho_bar.iter().all(|r| *r == 1.0));
        assert!(s.phi_bar.iter().all(|p| p.abs() < 1e-15));
        assert!(s.e_bar.iter().all(|e| e.abs() < 1e-15));
        assert!(s.residual_norm < 1e-12);
        assert!(rep.mass_defect.abs() <= 1e-12);
        let (m, p) = steady_residual(&s, &law(), &b);
        assert!(m < 1e-12 && p < 1e-12);
    }

    #[test]
    fn supersonic_current_rejected() {
        let g = Grid::new(50).unwrap();
        let b = DopingProfile::constant(&g, 1.0).unwrap();
        let r = solve_given_current(&g, &law(), &b, (1.0, 1.0), 2.0, 0.0, &Default::default());
        assert!(matches!(r, Err(SepError::Supersonic { .. })));
    }

    #[test]
    fn bump_doping_converges_with_small_residuals() {
        let g = Grid::new(200).unwrap();
        let b = DopingProfile::bump(&g, 1.0, 0.5, 0.15, 0.4).unwrap();
        let opts = SteadyOptions::default();
        let (s, rep) = solve_given_current(&g, &law(), &b, (1.0, 1.0), 0.02, 0.0, &opts).unwrap();
        assert!(s.residual_norm <= opts.tol, "residual {}", s.residual_norm);
        assert!(s.subsonic_margin > 0.0);
        assert!(rep.iterations >= 1);
        for w in rep.residual_history.windows(2).skip(1) {
            assert!(w[1] < w[0] || w[0] < 1e-14);
        }
        let (m, p) = steady_residual(&s, &law(), &b);
        assert!(m <= 10.0 * opts.tol, "momentum defect {m}");
        // consistency check, second order in h
        assert!(p < 1e-3, "poisson defect {p}");
    }

    #[test]
    fn residual_detects_perturbed_density() {
        let g = Grid::new(200).unwrap();
        let b = DopingProfile::bump(&g, 1.0, 0.5, 0.15, 0.4).unwrap();
        let (mut s, _) = solve_given_current(&g, &law(), &b, (1.0, 1.0), 0.02, 0.0, &Default::default()).unwrap();
        for (i, x) in g.nodes().into_iter().enumerate() {
            s.rho_bar[i] += 1e-3 * (-((x - 0.4) / 0.05).powi(2)).exp();
        }
        assert!(steady_residual(&s, &law(), &b).0 > 1e-5);
    }

    #[test]
    fn symmetric_voltage_gives_zero_current() {
        let g = Grid::new(100).unwrap();
        let b = DopingProfile::constant(&g, 1.0).unwrap();
        let bd = BoundaryData::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let (s, rep) = solve_given_voltage(&g, &law(), &b, &bd, &Default::default()).unwrap();
        assert!(s.j_bar.abs() <= 1e-9);
        assert!(s.rho_bar.iter().all(|r| (r - 1.0).abs() <= 1e-9));
        assert_eq!(rep.mode, SolveMode::GivenVoltage);
    }

    #[test]
    fn out_of_range_voltage_has_no_bracket() {
        let g = Grid::new(100).unwrap();
        let b = DopingProfile::constant(&g, 1.0).unwrap();
        let bd = BoundaryData::new(1.0, 1.0, 0.0, 0.5).unwrap();
        let r = solve_given_voltage(&g, &law(), &b, &bd, &Default::default());
        assert!(matches!(r, Err(SepError::NoBracket { .. })));
    }
}
