//! Energy functionals and norms of the perturbation along a trajectory.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Result, SepError};
use crate::model::{FlowField, Grid, PressureLaw};
use crate::perturbation::PerturbationState;
use crate::problem::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticFrame {
    pub t: f64,
    pub rel_energy: f64,
    pub h2_sigma: f64,
    pub h2_j: f64,
    pub l2_etilde: f64,
    /// `int r |w_x|^2`, when the weights exist.
    pub weighted_first: Option<f64>,
    /// `int r~ |w_xx|^2`, when the weights exist.
    pub weighted_second: Option<f64>,
    /// `|sigma|_{H2}^2 + |j|_{H2}^2 + |e~|^2`.
    pub composite: f64,
    pub running_sup_composite: f64,
    pub subsonic_margin: f64,
    /// `|rho - rhobar|_inf`.
    pub sigma_sup: f64,
}

pub const RUN_CSV_HEADER: &str = "t,rel_energy,h2_sigma,h2_j,l2_etilde,composite,running_sup_composite,subsonic_margin";

/// `G(rhobar + sigma) - G(rhobar) - G'(rhobar) sigma`, evaluated without
/// cancellation at the scale of `G`.
fn enthalpy_gap(law: &PressureLaw, rho_bar: f64, sigma: f64) -> f64 {
    let g = law.gamma;
    let t = sigma / rho_bar;
    law.kappa * rho_bar.powf(g) * ((g * t.ln_1p()).exp_m1() - g * t) / (g - 1.0)
}

/// Relative energy
/// `int (rhobar j - Jbar sigma)^2 / (2 rho rhobar^2) + G(rho) - G(rhobar) - G'(rhobar) sigma + e~^2/2`.
pub fn relative_energy(problem: &Problem, pert: &PerturbationState) -> Result<f64> {
    let law = &problem.law;
    law.enthalpy(1.0)?;
    let rho_bar = &problem.rest.rho;
    let j_bar = problem.steady.j_bar;
    let mut integrand = Vec::with_capacity(rho_bar.len());
    for i in 0..rho_bar.len() {
        let (rb, s) = (rho_bar[i], pert.sigma[i]);
        let rho = rb + s;
        if !(rho > 0.0) {
            return Err(SepError::Vacuum { node: i, rho });
        }
        let m = rb * pert.j[i] - j_bar * s;
        integrand.push(m * m / (2.0 * rho * rb * rb) + enthalpy_gap(law, rb, s) + 0.5 * pert.e_tilde[i] * pert.e_tilde[i]);
    }
    Ok(problem.grid.integrate(&integrand))
}

/// `|sigma|_{H2}^2 + |j|_{H2}^2 + |e~|_{L2}^2`.
pub fn composite(grid: &Grid, pert: &PerturbationState) -> f64 {
    grid.h2_sq(&pert.sigma) + grid.h2_sq(&pert.j) + grid.l2_sq(&pert.e_tilde)
}

/// `int (j^2 + sigma^2 + e~^2)`.
pub fn l2_energy(grid: &Grid, pert: &PerturbationState) -> f64 {
    grid.l2_sq(&pert.sigma) + grid.l2_sq(&pert.j) + grid.l2_sq(&pert.e_tilde)
}

/// `(int r |w_x|^2, int r~ |w_xx|^2)`.
pub fn weighted_energies(grid: &Grid, pert: &PerturbationState, r: &[f64], r_tilde: &[f64]) -> (f64, f64) {
    let (sx, jx) = (grid.dx(&pert.sigma), grid.dx(&pert.j));
    let (sxx, jxx) = (grid.dxx(&pert.sigma), grid.dxx(&pert.j));
    let first: Vec<f64> = (0..r.len()).map(|i| r[i] * (sx[i] * sx[i] + jx[i] * jx[i])).collect();
    let second: Vec<f64> = (0..r.len()).map(|i| r_tilde[i] * (sxx[i] * sxx[i] + jxx[i] * jxx[i])).collect();
    (grid.integrate(&first), grid.integrate(&second))
}

impl DiagnosticFrame {
    pub fn compute(problem: &Problem, flow: &FlowField, running_sup: f64) -> Result<Self> {
        let grid = &problem.grid;
        let pert = PerturbationState::from_flow(problem, flow);
        let rel_energy = relative_energy(problem, &pert)?;
        let (hs, hj, le) = (grid.h2_sq(&pert.sigma), grid.h2_sq(&pert.j), grid.l2_sq(&pert.e_tilde));
        let composite = hs + hj + le;
        let (weighted_first, weighted_second) = match &problem.weights {
            Some((r, rt)) => {
                let (a, b) = weighted_energies(grid, &pert, r, rt);
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        let law = &problem.law;
        let subsonic_margin = flow
            .rho
            .iter()
            .zip(&flow.current)
            .map(|(r, j)| law.subsonic_margin(*r, *j))
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            t: flow.t,
            rel_energy,
            h2_sigma: hs.sqrt(),
            h2_j: hj.sqrt(),
            l2_etilde: le.sqrt(),
            weighted_first,
            weighted_second,
            composite,
            running_sup_composite: running_sup.max(composite),
            subsonic_margin,
            sigma_sup: Grid::sup(&pert.sigma),
        })
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.t,
            self.rel_energy,
            self.h2_sigma,
            self.h2_j,
            self.l2_etilde,
            self.composite,
            self.running_sup_composite,
            self.subsonic_margin
        )
    }
}

/// Max over consecutive snapshot pairs and interior nodes of
/// `|(e~(t+dt) - e~(t))/dt + j(t) - int j(t)|`.
pub fn efield_identity_defect(grid: &Grid, snapshots: &[FlowField]) -> Result<f64> {
    if snapshots.len() < 2 {
        return Err(SepError::InsufficientData(format!(
            "field identity needs two consecutive snapshots, got {}",
            snapshots.len()
        )));
    }
    let n = grid.n_cells();
    let mut worst = 0.0f64;
    for w in snapshots.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dt = b.t - a.t;
        if !(dt > 0.0) {
            return Err(SepError::InsufficientData("snapshots not increasing in time".into()));
        }
        // Jbar and Ebar drop out of the difference.
        let mean = grid.integrate(&a.current);
        for i in 1..n {
            let d = (b.efield[i] - a.efield[i]) / dt + a.current[i] - mean;
            worst = worst.max(d.abs());
        }
    }
    Ok(worst)
}

pub fn write_run_csv(path: &Path, frames: &[DiagnosticFrame]) -> Result<()> {
    crate::output::write_bytes(path, &crate::output::run_csv_bytes(frames))
}

/// Snapshot CSV with columns `x,rho,J,Phi,E`.
pub fn write_snapshot(path: &Path, grid: &Grid, flow: &FlowField) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "x,rho,J,Phi,E")?;
    for i in 0..grid.n_nodes() {
        writeln!(
            f,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            grid.x(i),
            flow.rho[i],
            flow.current[i],
            flow.phi[i],
            flow.efield[i]
        )?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DopingProfile;
    use crate::steady::{solve_given_current, SteadyOptions};
    use std::f64::consts::PI;

    fn flat_problem(n: usize, j_bar: f64) -> Problem {
        let grid = Grid::new(n).unwrap();
        let law = PressureLaw::new(2.0, 1.0).unwrap();
        let b = DopingProfile::constant(&grid, 1.0).unwrap();
        let (st, _) = solve_given_current(&grid, &law, &b, (1.0, 1.0), j_bar, 0.0, &SteadyOptions::default()).unwrap();
        Problem::new(law, b, st).unwrap()
    }

    #[test]
    fn zero_perturbation_zero_energy() {
        let p = flat_problem(50, 0.01);
        let z = PerturbationState::zero(&p.grid);
        assert_eq!(relative_energy(&p, &z).unwrap(), 0.0);
        assert_eq!(composite(&p.grid, &z), 0.0);
        let (r, rt) = p.weights.clone().unwrap();
        assert_eq!(weighted_energies(&p.grid, &z, &r, &rt), (0.0, 0.0));
    }

    #[test]
    fn constant_current_perturbation() {
        let p = flat_problem(50, 0.0);
        let c = 0.3;
        let w = PerturbationState { sigma: vec![0.0; 51], j: vec![c; 51], e_tilde: vec![0.0; 51] };
        assert!((relative_energy(&p, &w).unwrap() - c * c / 2.0).abs() < 1e-14);
    }

    #[test]
    fn energy_quadratic_at_small_amplitude() {
        let p = flat_problem(100, 0.01);
        let g = &p.grid;
        let e = |a: f64| {
            let mut sigma = g.sample(|x| a * (PI * x).sin() + 0.5 * a * (2.0 * PI * x).sin());
            sigma[100] = 0.0;
            let j = g.sample(|x| a * (PI * x).cos());
            relative_energy(&p, &PerturbationState::from_parts(g, sigma, j).unwrap()).unwrap()
        };
        for a in [1e-2, 1e-3] {
            let ratio = e(a) / e(a / 2.0);
            assert!((3.8..=4.2).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn energy_nonnegative_on_samples() {
        let p = flat_problem(40, 0.05);
        let g = &p.grid;
        for k in 0..20 {
            let a = 0.04 * k as f64;
            let mut sigma = g.sample(|x| -a * (3.0 * PI * x).sin());
            sigma[40] = 0.0;
            let j = g.sample(|x| a * (x - 0.5));
            let w = PerturbationState::from_parts(g, sigma, j).unwrap();
            assert!(relative_energy(&p, &w).unwrap() >= 0.0);
        }
    }

    #[test]
    fn weighted_energy_of_sine() {
        let g = Grid::new(200).unwrap();
        let w = PerturbationState::from_parts(&g, g.sample(|x| (PI * x).sin()), vec![0.0; 201]).unwrap();
        let ones = vec![1.0; 201];
        let (a, _) = weighted_energies(&g, &w, &ones, &ones);
        assert!((a - PI * PI / 2.0).abs() < 1e-3);
        let twos = vec![2.0; 201];
        let (b, _) = weighted_energies(&g, &w, &twos, &ones);
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn identity_defect_needs_two_snapshots() {
        let p = flat_problem(20, 0.0);
        assert!(matches!(efield_identity_defect(&p.grid, std::slice::from_ref(&p.rest)), Err(SepError::InsufficientData(_))));
    }

    #[test]
    fn identity_defect_vanishes_at_rest() {
        let p = flat_problem(20, 0.01);
        let mut b = p.rest.clone();
        b.t = 0.01;
        assert!(efield_identity_defect(&p.grid, &[p.rest.clone(), b]).unwrap() <= 1e-8);
    }

    #[test]
    fn csv_row_has_eight_fields() {
        let p = flat_problem(20, 0.01);
        let f = DiagnosticFrame::compute(&p, &p.rest, 0.0).unwrap();
        assert_eq!(f.csv_row().split(',').count(), RUN_CSV_HEADER.split(',').count());
    }
}
