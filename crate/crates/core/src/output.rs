//! File formats: `run.csv`, snapshots, `steady.json` and `summary.json`.

use std::path::Path;

use serde::Serialize;

use crate::diagnostics::{DiagnosticFrame, RUN_CSV_HEADER};
use crate::error::{Result, SepError};
use crate::monte_carlo::EnsembleSummary;
use crate::problem::Problem;
use crate::steady::{steady_residual, SteadySolveReport};

pub fn run_csv_bytes(frames: &[DiagnosticFrame]) -> Vec<u8> {
    let mut s = String::with_capacity(160 * (frames.len() + 1));
    s.push_str(RUN_CSV_HEADER);
    s.push('\n');
    for f in frames {
        s.push_str(&f.csv_row());
        s.push('\n');
    }
    s.into_bytes()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyResiduals {
    /// Sup norm of the Newton residual per iteration.
    pub newton_history: Vec<f64>,
    /// Sup defect of `(J^2/rho + P)_x - rho E + J`.
    pub momentum: f64,
    /// Sup defect of `Phi_xx - (rho - b)`.
    pub poisson: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct SteadyJson {
    pub gamma: f64,
    pub kappa: f64,
    pub J_bar: f64,
    pub phi_right_attained: f64,
    pub subsonic_margin: f64,
    pub mass_defect: f64,
    pub residuals: SteadyResiduals,
    pub nodes: Vec<f64>,
    pub rho_bar: Vec<f64>,
    pub Phi_bar: Vec<f64>,
    pub E_bar: Vec<f64>,
}

impl SteadyJson {
    pub fn new(problem: &Problem, report: &SteadySolveReport) -> Self {
        let st = &problem.steady;
        let (momentum, poisson) = steady_residual(st, &problem.law, &problem.doping);
        Self {
            gamma: problem.law.gamma,
            kappa: problem.law.kappa,
            J_bar: st.j_bar,
            phi_right_attained: st.phi_right(),
            subsonic_margin: st.subsonic_margin,
            mass_defect: report.mass_defect,
            residuals: SteadyResiduals { newton_history: report.residual_history.clone(), momentum, poisson },
            nodes: problem.grid.nodes(),
            rho_bar: st.rho_bar.clone(),
            Phi_bar: st.phi_bar.clone(),
            E_bar: st.e_bar.clone(),
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v).map_err(|e| SepError::Io(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn steady_json_bytes(problem: &Problem, report: &SteadySolveReport) -> Result<Vec<u8>> {
    to_json(&SteadyJson::new(problem, report))
}

pub fn summary_json_bytes(summary: &EnsembleSummary) -> Result<Vec<u8>> {
    to_json(summary)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| SepError::Io(format!("{}: {e}", path.display())))
}
