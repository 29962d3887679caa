//! Time integration of the stochastically forced system.

pub mod noise;
pub mod scheme;
pub mod simulate;

pub use noise::{stream_rng, NoiseModel, NoisePath, NoiseReduction};
pub use scheme::{cfl_dt, step, step_with_normals, SchemeOptions, StepInfo};
pub use simulate::{
    initial_perturbation, integrate, integrate_on_path, simulate, IntegrationSummary, IntegratorConfig,
    PathFailure, PathRecord,
};
