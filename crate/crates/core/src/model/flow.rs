use serde::{Deserialize, Serialize};

use crate::error::{Result, SepError};

/// Ohmic contact data: Dirichlet values for density and potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub rho_left: f64,
    pub rho_right: f64,
    pub phi_left: f64,
    pub phi_right: f64,
}

impl BoundaryData {
    pub fn new(rho_left: f64, rho_right: f64, phi_left: f64, phi_right: f64) -> Result<Self> {
        if !(rho_left > 0.0 && rho_right > 0.0) {
            return Err(SepError::Domain(format!(
                "contact densities must be positive, got ({rho_left}, {rho_right})"
            )));
        }
        if !(phi_left.is_finite() && phi_right.is_finite()) {
            return Err(SepError::Domain("contact potentials must be finite".into()));
        }
        Ok(Self { rho_left, rho_right, phi_left, phi_right })
    }
}

/// Density, current, potential and electric field on the grid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub rho: Vec<f64>,
    pub current: Vec<f64>,
    pub phi: Vec<f64>,
    pub efield: Vec<f64>,
    pub t: f64,
}

impl FlowField {
    /// First node with `rho <= 0`, if any.
    pub fn check_positive(&self) -> Result<()> {
        match self.rho.iter().position(|r| !(*r > 0.0)) {
            Some(node) => Err(SepError::Vacuum { node, rho: self.rho[node] }),
            None => Ok(()),
        }
    }
}
