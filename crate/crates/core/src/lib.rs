#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod integrator;
pub mod model;
pub mod output;
pub mod monte_carlo;
pub mod perturbation;
pub mod problem;
pub mod stats;
pub mod steady;
pub mod verify;

pub use error::{Result, SepError};
pub use problem::Problem;
