//! Physical model: pressure law, doping, contacts, grid calculus and the
//! Poisson solver.

pub mod doping;
pub mod flow;
pub mod grid;
pub mod poisson;
pub mod pressure;
pub mod tridiag;

pub use doping::{DopingProfile, DopingSource};
pub use flow::{BoundaryData, FlowField};
pub use grid::{Grid, GridCalculus};
pub use poisson::{electric_field, poisson_residual, solve_poisson};
pub use pressure::PressureLaw;
