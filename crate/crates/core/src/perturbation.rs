//! Perturbation form of the system around the steady state: the coefficient
//! fields of `w_t + A w_x + B w + C = N`, the symmetrizer weights `r`, `r~`,
//! and the frozen-coefficient (Picard) iteration.
//!
//! `Ebar` below is always the field of the rest state (the steady density
//! with its Poisson-consistent potential), so that `e~ = E - Ebar` is exactly
//! the derivative of the homogeneous Dirichlet potential generated by `sigma`.

use std::io::Write;
use std::path::Path;

use crate::error::{Result, SepError};
use crate::integrator::noise::{NoiseModel, NoisePath};
use crate::integrator::scheme::{explicit_drift, face_speeds, max_speed, SchemeOptions};
use crate::model::poisson::solve_dirichlet;
use crate::model::{FlowField, Grid, PressureLaw};
use crate::problem::Problem;
use crate::steady::SteadyState;

/// `(sigma, j, e~) = (rho - rhobar, J - Jbar, E - Ebar)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationState {
    pub sigma: Vec<f64>,
    pub j: Vec<f64>,
    pub e_tilde: Vec<f64>,
}

/// Field perturbation generated by a density perturbation vanishing at both ends.
pub fn e_tilde_from_sigma(grid: &Grid, sigma: &[f64]) -> Vec<f64> {
    grid.dx(&solve_dirichlet(grid, sigma, 0.0, 0.0))
}

impl PerturbationState {
    pub fn zero(grid: &Grid) -> Self {
        let n = grid.n_nodes();
        Self { sigma: vec![0.0; n], j: vec![0.0; n], e_tilde: vec![0.0; n] }
    }

    /// Builds the state from `(sigma, j)`, computing `e~` from Poisson.
    pub fn from_parts(grid: &Grid, sigma: Vec<f64>, j: Vec<f64>) -> Result<Self> {
        grid.check(&sigma)?;
        grid.check(&j)?;
        let e_tilde = e_tilde_from_sigma(grid, &sigma);
        Ok(Self { sigma, j, e_tilde })
    }

    pub fn from_flow(problem: &Problem, flow: &FlowField) -> Self {
        let rest = &problem.rest;
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
        Self {
            sigma: diff(&flow.rho, &rest.rho),
            j: diff(&flow.current, &rest.current),
            e_tilde: diff(&flow.efield, &rest.efield),
        }
    }

    /// Full flow field `rest + perturbation` at time `t`.
    pub fn to_flow(&self, problem: &Problem, t: f64) -> FlowField {
        let rest = &problem.rest;
        let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>();
        let dphi = solve_dirichlet(&problem.grid, &self.sigma, 0.0, 0.0);
        FlowField {
            rho: add(&rest.rho, &self.sigma),
            current: add(&rest.current, &self.j),
            phi: add(&rest.phi, &dphi),
            efield: add(&rest.efield, &self.e_tilde),
            t,
        }
    }

    /// `(|sigma|_{H2}^2 + |j|_{H2}^2)^{1/2}`.
    pub fn h2_norm(&self, grid: &Grid) -> f64 {
        (grid.h2_sq(&self.sigma) + grid.h2_sq(&self.j)).sqrt()
    }

    fn sub(&self, other: &Self) -> Self {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
        Self {
            sigma: d(&self.sigma, &other.sigma),
            j: d(&self.j, &other.j),
            e_tilde: d(&self.e_tilde, &other.e_tilde),
        }
    }
}

pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFields {
    pub a: Vec<Mat2>,
    pub b: Vec<Mat2>,
    pub c: Vec<[f64; 2]>,
    pub n: Vec<[f64; 2]>,
}

fn check_vacuum(problem: &Problem, pert: &PerturbationState) -> Result<Vec<f64>> {
    let rho: Vec<f64> = problem.rest.rho.iter().zip(&pert.sigma).map(|(r, s)| r + s).collect();
    if let Some(node) = rho.iter().position(|r| !(*r > 0.0)) {
        return Err(SepError::Vacuum { node, rho: rho[node] });
    }
    Ok(rho)
}

/// `A(rho, J)` bottom row: `(P'(rho) - J^2/rho^2, 2J/rho)`.
#[inline]
fn a_row(law: &PressureLaw, rho: f64, current: f64) -> (f64, f64) {
    let u = current / rho;
    (law.dp(rho) - u * u, 2.0 * u)
}

/// Steady coefficient `B` bottom row.
fn b_row(law: &PressureLaw, rho_bar: f64, rho_bar_x: f64, j_bar: f64, e_bar: f64) -> (f64, f64) {
    let r3 = rho_bar * rho_bar * rho_bar;
    (
        -2.0 * j_bar * j_bar * rho_bar_x / r3 + law.ddp(rho_bar) * rho_bar_x - e_bar,
        -2.0 * j_bar * rho_bar_x / (rho_bar * rho_bar) + 1.0,
    )
}

/// Time derivative of `(sigma, j)` for the nonlinear system, with the flux
/// divergence written by the chain rule on the grid stencils and the steady
/// balance subtracted.
pub fn nonlinear_drift(problem: &Problem, pert: &PerturbationState) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = &problem.grid;
    let law = &problem.law;
    let rho = check_vacuum(problem, pert)?;
    let rho_bar = &problem.rest.rho;
    let j_bar = problem.steady.j_bar;
    let e_bar = &problem.rest.efield;
    let rho_x = grid.dx(&rho);
    let rho_bar_x = grid.dx(rho_bar);
    let j_x = grid.dx(&pert.j);

    let d_sigma: Vec<f64> = j_x.iter().map(|v| -v).collect();
    let d_j = (0..grid.n_nodes())
        .map(|i| {
            let (a21, a22) = a_row(law, rho[i], j_bar + pert.j[i]);
            let (a21_bar, _) = a_row(law, rho_bar[i], j_bar);
            let s = pert.sigma[i];
            let et = pert.e_tilde[i];
            -(a21 * rho_x[i] + a22 * j_x[i] - a21_bar * rho_bar_x[i]) - pert.j[i]
                + rho_bar[i] * et
                + s * e_bar[i]
                + s * et
        })
        .collect();
    Ok((d_sigma, d_j))
}

/// Coefficient fields at `pert`; `N` is the exact defect, so that
/// `-(A w_x + B w + C) + N` reproduces [`nonlinear_drift`].
pub fn assemble_coefficients(problem: &Problem, pert: &PerturbationState) -> Result<CoefficientFields> {
    let grid = &problem.grid;
    let law = &problem.law;
    let rho = check_vacuum(problem, pert)?;
    let (d_sigma, d_j) = nonlinear_drift(problem, pert)?;
    let rho_bar = &problem.rest.rho;
    let j_bar = problem.steady.j_bar;
    let rho_bar_x = grid.dx(rho_bar);
    let sigma_x = grid.dx(&pert.sigma);
    let j_x = grid.dx(&pert.j);

    let n_nodes = grid.n_nodes();
    let mut out = CoefficientFields {
        a: Vec::with_capacity(n_nodes),
        b: Vec::with_capacity(n_nodes),
        c: Vec::with_capacity(n_nodes),
        n: Vec::with_capacity(n_nodes),
    };
    for i in 0..n_nodes {
        let (a21, a22) = a_row(law, rho[i], j_bar + pert.j[i]);
        let (b21, b22) = b_row(law, rho_bar[i], rho_bar_x[i], j_bar, problem.rest.efield[i]);
        let a = [[0.0, 1.0], [a21, a22]];
        let b = [[0.0, 0.0], [b21, b22]];
        let c = [0.0, -rho_bar[i] * pert.e_tilde[i]];
        let w = [pert.sigma[i], pert.j[i]];
        let wx = [sigma_x[i], j_x[i]];
        let lin = |r: usize| a[r][0] * wx[0] + a[r][1] * wx[1] + b[r][0] * w[0] + b[r][1] * w[1] + c[r];
        out.n.push([d_sigma[i] + lin(0), d_j[i] + lin(1)]);
        out.a.push(a);
        out.b.push(b);
        out.c.push(c);
    }
    Ok(out)
}

fn steady_margin_check(steady: &SteadyState, law: &PressureLaw) -> Result<Vec<f64>> {
    let m: Vec<f64> = steady.rho_bar.iter().map(|r| law.subsonic_margin(*r, steady.j_bar)).collect();
    if let Some((i, v)) = m.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(SepError::Supersonic { margin: *v, x: steady.grid.x(i) });
    }
    Ok(m)
}

/// Coefficient `k` of `r_x = k r`.
fn first_order_rate(steady: &SteadyState, law: &PressureLaw) -> Result<Vec<f64>> {
    let margin = steady_margin_check(steady, law)?;
    let grid = &steady.grid;
    let rx = grid.dx(&steady.rho_bar);
    let j = steady.j_bar;
    Ok((0..grid.n_nodes())
        .map(|i| {
            let r = steady.rho_bar[i];
            let num = 3.0 * j * j * rx[i] / (r * r * r) + law.ddp(r) * rx[i] - law.dp(r) * rx[i] / r - j / r;
            num / margin[i]
        })
        .collect())
}

/// First-order weight: `r = r0 exp(int_0^x k)`.
pub fn first_order_symmetrizer(steady: &SteadyState, law: &PressureLaw, r0: f64) -> Result<Vec<f64>> {
    if !(r0 > 0.0) {
        return Err(SepError::Domain(format!("r(0) must be positive, got {r0}")));
    }
    let k = first_order_rate(steady, law)?;
    Ok(steady.grid.cumulative_integral(&k).into_iter().map(|v| r0 * v.exp()).collect())
}

/// Coefficients `(G, M)` of `r~_x + G r~ + M = 0`.
fn second_order_coefficients(steady: &SteadyState, law: &PressureLaw) -> Result<(Vec<f64>, Vec<f64>)> {
    let margin = steady_margin_check(steady, law)?;
    let grid = &steady.grid;
    let rx = grid.dx(&steady.rho_bar);
    let mx = grid.dx(&margin);
    let j = steady.j_bar;
    let mut g = Vec::with_capacity(grid.n_nodes());
    let mut m = Vec::with_capacity(grid.n_nodes());
    for i in 0..grid.n_nodes() {
        let r = steady.rho_bar[i];
        let num = 5.0 * mx[i] - 2.0 * j * j * rx[i] / (r * r * r) + law.ddp(r) * rx[i] - steady.e_bar[i];
        g.push(num / (3.0 * margin[i]));
        m.push(-2.0 / (3.0 * margin[i]));
    }
    Ok((g, m))
}

/// Running trapezoid integral with the endpoint derivative correction
/// `-h^2/12 (f'_{i+1} - f'_i)` on each cell.
fn corrected_cumulative(grid: &Grid, f: &[f64]) -> Vec<f64> {
    let h = grid.h();
    let fx = grid.dx(f);
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 0..f.len() - 1 {
        acc += 0.5 * h * (f[i] + f[i + 1]) - h * h / 12.0 * (fx[i + 1] - fx[i]);
        out.push(acc);
    }
    out
}

/// Second-order weight `r~ = e^{-Gamma} (r~0 - int_0^x e^{Gamma} M)`,
/// `Gamma = int_0^x G`.
pub fn second_order_symmetrizer(steady: &SteadyState, law: &PressureLaw, r_tilde0: f64) -> Result<Vec<f64>> {
    if !(r_tilde0 > 0.0) {
        return Err(SepError::Domain(format!("r~(0) must be positive, got {r_tilde0}")));
    }
    let grid = &steady.grid;
    let (g, m) = second_order_coefficients(steady, law)?;
    let gamma = corrected_cumulative(grid, &g);
    let forcing: Vec<f64> = gamma.iter().zip(&m).map(|(ga, mm)| ga.exp() * mm).collect();
    let particular = corrected_cumulative(grid, &forcing);
    let rt: Vec<f64> = gamma.iter().zip(&particular).map(|(ga, p)| (-ga).exp() * (r_tilde0 - p)).collect();
    let (i_min, min) = rt.iter().copied().enumerate().fold((0, f64::INFINITY), |a, (i, v)| if v < a.1 { (i, v) } else { a });
    if !(min > 0.0) {
        return Err(SepError::SymmetrizerPositivity { min, x: grid.x(i_min) });
    }
    Ok(rt)
}

/// Interior sup norm of `r_x - k r` with central differences.
pub fn first_order_residual(steady: &SteadyState, law: &PressureLaw, r: &[f64]) -> Result<f64> {
    let k = first_order_rate(steady, law)?;
    let n = steady.grid.n_cells();
    let inv2h = 0.5 * n as f64;
    Ok((1..n).map(|i| ((r[i + 1] - r[i - 1]) * inv2h - k[i] * r[i]).abs()).fold(0.0, f64::max))
}

/// Interior sup norm of `r~_x + G r~ + M` with central differences.
pub fn second_order_residual(steady: &SteadyState, law: &PressureLaw, rt: &[f64]) -> Result<f64> {
    let (g, m) = second_order_coefficients(steady, law)?;
    let n = steady.grid.n_cells();
    let inv2h = 0.5 * n as f64;
    Ok((1..n).map(|i| ((rt[i + 1] - rt[i - 1]) * inv2h + g[i] * rt[i] + m[i]).abs()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrizerWeights {
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub r_tilde: Vec<f64>,
    pub s_tilde: Vec<f64>,
}

impl SymmetrizerWeights {
    /// Weights with `r(0) = r~(0) = 1`; `s~` is evaluated at `rest + pert`
    /// (at the steady state itself when `pert` is `None`).
    pub fn compute(problem: &Problem, pert: Option<&PerturbationState>) -> Result<Self> {
        let steady = &problem.steady;
        let law = &problem.law;
        let r = first_order_symmetrizer(steady, law, 1.0)?;
        let r_tilde = second_order_symmetrizer(steady, law, 1.0)?;
        let j_bar = steady.j_bar;
        let s = steady.rho_bar.iter().zip(&r).map(|(rb, rr)| law.subsonic_margin(*rb, j_bar) * rr).collect();
        let s_tilde = (0..problem.grid.n_nodes())
            .map(|i| {
                let (ds, dj) = pert.map_or((0.0, 0.0), |p| (p.sigma[i], p.j[i]));
                law.subsonic_margin(steady.rho_bar[i] + ds, j_bar + dj) * r_tilde[i]
            })
            .collect();
        Ok(Self { r, s, r_tilde, s_tilde })
    }

    /// CSV with columns `x,r,s,r_tilde,s_tilde`.
    pub fn write_csv(&self, grid: &Grid, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "x,r,s,r_tilde,s_tilde")?;
        for i in 0..grid.n_nodes() {
            writeln!(
                f,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                grid.x(i),
                self.r[i],
                self.s[i],
                self.r_tilde[i],
                self.s_tilde[i]
            )?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Interior-node action of the frozen linear operator `L` (everything but
/// the relaxation) on the increment `d`, with coefficients taken at `base`.
fn frozen_linear(
    problem: &Problem,
    opts: &SchemeOptions,
    base: &FlowField,
    alpha: &[f64],
    d: &PerturbationState,
) -> (Vec<f64>, Vec<f64>) {
    let grid = &problem.grid;
    let law = &problem.law;
    let n = grid.n_cells();
    let inv_h = n as f64;
    let inv2h = 0.5 * inv_h;
    let rho_bar = &problem.rest.rho;
    let rho_bar_x = grid.dx(rho_bar);
    let j_bar = problem.steady.j_bar;
    let mu = opts.artificial_viscosity;

    let diss = |u: &[f64], i: usize| 0.5 * inv_h * (alpha[i] * (u[i + 1] - u[i]) - alpha[i - 1] * (u[i] - u[i - 1]));
    let visc = |u: &[f64], i: usize| mu * (u[i - 1] - 2.0 * u[i] + u[i + 1]) * inv_h * inv_h;

    let mut l_s = vec![0.0; n + 1];
    let mut l_j = vec![0.0; n + 1];
    for i in 1..n {
        let ds_x = (d.sigma[i + 1] - d.sigma[i - 1]) * inv2h;
        let dj_x = (d.j[i + 1] - d.j[i - 1]) * inv2h;
        let (a21, a22) = a_row(law, base.rho[i], base.current[i]);
        let (b21, b22) = b_row(law, rho_bar[i], rho_bar_x[i], j_bar, problem.rest.efield[i]);
        l_s[i] = -dj_x + diss(&d.sigma, i) + visc(&d.sigma, i);
        l_j[i] = -(a21 * ds_x + a22 * dj_x) - b21 * d.sigma[i] - (b22 - 1.0) * d.j[i]
            + rho_bar[i] * d.e_tilde[i]
            + diss(&d.j, i)
            + visc(&d.j, i);
    }
    (l_s, l_j)
}

/// One Picard sweep: integrates the system linearized about the previous
/// iterate `prev` (drift of the main scheme at `prev` plus the frozen
/// operator applied to the increment), with noise coefficient from `prev`
/// and the increments of `path`. A fixed point of the sweep is the
/// trajectory of the main integrator on the same path.
pub fn picard_iterate(
    problem: &Problem,
    opts: &SchemeOptions,
    noise: &NoiseModel,
    prev: &[PerturbationState],
    path: &NoisePath,
) -> Result<Vec<PerturbationState>> {
    if opts.reconstruction {
        return Err(SepError::Unsupported("Picard sweep with reconstruction".into()));
    }
    let steps = path.steps();
    if prev.len() != steps + 1 {
        return Err(SepError::Shape { expected: steps + 1, got: prev.len() });
    }
    let grid = &problem.grid;
    let n = grid.n_cells();
    let dt = path.dt;
    let j_bar = problem.steady.j_bar;
    let relax = 1.0 / (1.0 + dt);

    let mut out = Vec::with_capacity(steps + 1);
    out.push(prev[0].clone());
    let mut dm = vec![0.0; n + 1];
    for k in 0..steps {
        let base = prev[k].to_flow(problem, k as f64 * dt);
        let (speed, _) = max_speed(&base, &problem.law)?;
        let bound = grid.h() / speed;
        if dt > bound {
            return Err(SepError::StepSize { dt, bound });
        }
        let (d_rho, d_j) = explicit_drift(problem, opts, &base);
        let alpha = face_speeds(&problem.law, &base);
        let cur: &PerturbationState = &out[k];
        let delta = cur.sub(&prev[k]);
        let (l_s, l_j) = frozen_linear(problem, opts, &base, &alpha, &delta);

        let mut sigma = vec![0.0; n + 1];
        let mut j = vec![0.0; n + 1];
        for i in 1..n {
            sigma[i] = cur.sigma[i] + dt * (d_rho[i] + l_s[i]);
            j[i] = (cur.j[i] + dt * (d_j[i] - j_bar + l_j[i])) * relax;
        }
        if !noise.is_off() {
            noise.increment_from_normals(&base.current, dt, &path.normals[k], &mut dm);
            for i in 1..n {
                j[i] += dm[i];
            }
        }
        j[0] = (4.0 * j[1] - j[2]) / 3.0;
        j[n] = (4.0 * j[n - 1] - j[n - 2]) / 3.0;
        let next = PerturbationState::from_parts(grid, sigma, j)?;
        check_vacuum(problem, &next)?;
        out.push(next);
    }
    Ok(out)
}

/// Iterates `w_0, w_1, ..., w_iterations`, starting from the trajectory that
/// stays at `initial`.
pub fn picard_sequence(
    problem: &Problem,
    opts: &SchemeOptions,
    noise: &NoiseModel,
    initial: &PerturbationState,
    path: &NoisePath,
    iterations: usize,
) -> Result<Vec<Vec<PerturbationState>>> {
    let mut seq = vec![vec![initial.clone(); path.steps() + 1]];
    for _ in 0..iterations {
        let next = picard_iterate(problem, opts, noise, seq.last().unwrap(), path)?;
        seq.push(next);
    }
    Ok(seq)
}

/// `sup_t |a(t) - b(t)|_{H2}` over two trajectories.
pub fn trajectory_distance(grid: &Grid, a: &[PerturbationState], b: &[PerturbationState]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.sub(y).h2_norm(grid)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DopingProfile;
    use crate::steady::{solve_given_current, SteadyOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(n: usize, doping: Option<(f64, f64, f64)>, ends: (f64, f64), j_bar: f64, kappa: f64) -> Problem {
        let grid = Grid::new(n).unwrap();
        let law = PressureLaw::new(2.0, kappa).unwrap();
        let b = match doping {
            Some((c, w, h)) => DopingProfile::bump(&grid, 1.0, c, w, h).unwrap(),
            None => DopingProfile::constant(&grid, 1.0).unwrap(),
        };
        let (st, _) = solve_given_current(&grid, &law, &b, ends, j_bar, 0.0, &SteadyOptions::default()).unwrap();
        Problem::new(law, b, st).unwrap()
    }

    fn random_pert(p: &Problem, amp: f64, seed: u64) -> PerturbationState {
        let g = &p.grid;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pi = std::f64::consts::PI;
        let mut sigma = g.sample(|x| amp * (0..3).map(|i| c[i] * ((i + 1) as f64 * pi * x).sin()).sum::<f64>());
        let n = g.n_cells();
        sigma[0] = 0.0;
        sigma[n] = 0.0;
        let j = g.sample(|x| amp * (0..3).map(|i| d[i] * ((i + 1) as f64 * pi * x).cos()).sum::<f64>());
        PerturbationState::from_parts(g, sigma, j).unwrap()
    }

    #[test]
    fn zero_perturbation_has_zero_defect() {
        let p = problem(50, Some((0.5, 0.15, 0.4)), (1.0, 1.2), 0.02, 1.0);
        let c = assemble_coefficients(&p, &PerturbationState::zero(&p.grid)).unwrap();
        assert!(c.n.iter().all(|v| v[0] == 0.0 && v[1].abs() < 1e-13));
        assert!(c.c.iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
    }

    #[test]
    fn coefficient_structure() {
        let p = problem(40, Some((0.5, 0.15, 0.4)), (1.0, 1.2), 0.02, 1.0);
        let c = assemble_coefficients(&p, &random_pert(&p, 1e-2, 1)).unwrap();
        for i in 0..41 {
            assert_eq!(c.a[i][0], [0.0, 1.0]);
            assert_eq!(c.b[i][0], [0.0, 0.0]);
            assert_eq!(c.c[i][0], 0.0);
            assert_eq!(c.n[i][0], 0.0);
        }
    }

    #[test]
    fn a_matrix_direct_value() {
        let law = PressureLaw::new(2.0, 1.0).unwrap();
        let (a21, a22) = a_row(&law, 1.0, 0.1);
        assert!((a21 - 1.99).abs() < 1e-15);
        assert!((a22 - 0.2).abs() < 1e-15);
    }

    #[test]
    fn matrix_form_reproduces_drift() {
        let p = problem(60, Some((0.4, 0.2, 0.3)), (1.0, 1.3), 0.03, 1.0);
        let g = &p.grid;
        for seed in 0..5 {
            let w = random_pert(&p, 2e-2, seed);
            let c = assemble_coefficients(&p, &w).unwrap();
            let (ds, dj) = nonlinear_drift(&p, &w).unwrap();
            let sx = g.dx(&w.sigma);
            let jx = g.dx(&w.j);
            for i in 0..g.n_nodes() {
                let ww = [w.sigma[i], w.j[i]];
                let wx = [sx[i], jx[i]];
                for r in 0..2 {
                    let lhs = c.a[i][r][0] * wx[0] + c.a[i][r][1] * wx[1] + c.b[i][r][0] * ww[0] + c.b[i][r][1] * ww[1]
                        + c.c[i][r]
                        - c.n[i][r];
                    let drift = if r == 0 { ds[i] } else { dj[i] };
                    assert!((lhs + drift).abs() <= 1e-12 * (1.0 + drift.abs()));
                }
            }
        }
    }

    #[test]
    fn defect_is_quadratic_without_current() {
        let p = problem(80, Some((0.5, 0.2, 0.3)), (1.0, 1.1), 0.0, 1.0);
        let sup_n = |a: f64| {
            let c = assemble_coefficients(&p, &random_pert(&p, a, 7)).unwrap();
            c.n.iter().fold(0.0f64, |m, v| m.max(v[1].abs()))
        };
        for a in [1e-2, 5e-3] {
            let ratio = sup_n(a) / sup_n(a / 2.0);
            assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn vacuum_detected() {
        let p = problem(20, None, (1.0, 1.0), 0.0, 1.0);
        let mut w = PerturbationState::zero(&p.grid);
        w.sigma[5] = -2.0;
        assert!(matches!(assemble_coefficients(&p, &w), Err(SepError::Vacuum { node: 5, .. })));
    }

    #[test]
    fn first_order_weight_constant_without_current() {
        let p = problem(50, None, (1.0, 1.0), 0.0, 1.0);
        let r = first_order_symmetrizer(&p.steady, &p.law, 2.5).unwrap();
        assert!(r.iter().all(|v| (v - 2.5).abs() < 1e-15));
    }

    #[test]
    fn first_order_weight_closed_form() {
        let eps = 0.01;
        let p = problem(200, None, (1.0, 1.0), eps, 1.0);
        let r = first_order_symmetrizer(&p.steady, &p.law, 1.0).unwrap();
        let rate = eps / (2.0 - eps * eps);
        for (i, v) in r.iter().enumerate() {
            assert!((v - (-rate * p.grid.x(i)).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn second_order_weight_closed_forms() {
        let p = problem(100, None, (1.0, 1.0), 0.0, 1.0);
        let rt = second_order_symmetrizer(&p.steady, &p.law, 1.0).unwrap();
        for (i, v) in rt.iter().enumerate() {
            assert!((v - (1.0 + p.grid.x(i) / 3.0)).abs() < 1e-10);
        }
        let q = problem(100, None, (1.0, 1.0), 0.0, 0.5);
        let rt = second_order_symmetrizer(&q.steady, &q.law, 1.0).unwrap();
        for (i, v) in rt.iter().enumerate() {
            assert!((v - (1.0 + 2.0 * q.grid.x(i) / 3.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn weights_solve_their_odes() {
        let p = problem(400, Some((0.5, 0.25, 0.2)), (1.0, 1.2), 0.02, 1.0);
        let r = first_order_symmetrizer(&p.steady, &p.law, 1.0).unwrap();
        let rt = second_order_symmetrizer(&p.steady, &p.law, 1.0).unwrap();
        let (a, b) = (first_order_residual(&p.steady, &p.law, &r).unwrap(), second_order_residual(&p.steady, &p.law, &rt).unwrap());
        assert!(a < 1e-6 && b < 1e-6, "{a} {b}");
        assert!(r.iter().chain(&rt).all(|v| *v > 0.0));
    }

    #[test]
    fn weights_csv_export() {
        let p = problem(10, None, (1.0, 1.0), 0.01, 1.0);
        let w = SymmetrizerWeights::compute(&p, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        w.write_csv(&p.grid, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "x,r,s,r_tilde,s_tilde");
        assert_eq!(text.lines().count(), 12);
    }

    #[test]
    fn picard_zero_is_fixed_point() {
        let p = problem(30, None, (1.0, 1.0), 0.0, 1.0);
        let path = NoisePath { dt: 1e-3, normals: vec![vec![]; 20] };
        let seq = picard_sequence(&p, &SchemeOptions::default(), &NoiseModel::off(), &PerturbationState::zero(&p.grid), &path, 2)
            .unwrap();
        for traj in &seq {
            assert!(traj.iter().all(|w| w.sigma.iter().chain(&w.j).all(|v| v.abs() < 1e-15)));
        }
    }

    #[test]
    fn picard_rejects_large_steps() {
        let p = problem(30, None, (1.0, 1.0), 0.0, 1.0);
        let path = NoisePath { dt: 0.1, normals: vec![vec![]; 2] };
        let w0 = PerturbationState::zero(&p.grid);
        let r = picard_iterate(&p, &SchemeOptions::default(), &NoiseModel::off(), &[w0.clone(), w0.clone(), w0], &path);
        assert!(matches!(r, Err(SepError::StepSize { .. })));
    }
}
