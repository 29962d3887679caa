use crate::error::Result;
use crate::model::{BoundaryData, DopingProfile, FlowField, Grid, PressureLaw};
use crate::perturbation::{first_order_symmetrizer, second_order_symmetrizer};
use crate::steady::SteadyState;

/// Everything a path needs besides its own state: physics, the steady state,
/// the rest flow it perturbs, contact data and the symmetrizer weights.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid,
    pub law: PressureLaw,
    pub doping: DopingProfile,
    pub steady: SteadyState,
    /// Steady density and current with the Poisson-consistent potential.
    pub rest: FlowField,
    pub contact: BoundaryData,
    /// `(r, r~)` with unit starting values; `None` when `r~` is not positive.
    pub weights: Option<(Vec<f64>, Vec<f64>)>,
}

impl Problem {
    pub fn new(law: PressureLaw, doping: DopingProfile, steady: SteadyState) -> Result<Self> {
        let grid = steady.grid;
        grid.check(doping.values())?;
        let rest = steady.rest_flow(&doping)?;
        let contact = steady.contact_data();
        let weights = match (first_order_symmetrizer(&steady, &law, 1.0), second_order_symmetrizer(&steady, &law, 1.0)) {
            (Ok(r), Ok(rt)) => Some((r, rt)),
            _ => None,
        };
        Ok(Self { grid, law, doping, steady, rest, contact, weights })
    }
}
