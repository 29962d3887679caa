use thiserror::Error;

/// Errors raised across the solver stack.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SepError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("shape mismatch: expected {expected} nodes, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("grid too coarse: need at least {min} cells, got {got}")]
    GridTooCoarse { min: usize, got: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("supersonic state: subsonic margin {margin:e} at x = {x}")]
    Supersonic { margin: f64, x: f64 },
    #[error("no sign change of the voltage mismatch for |J| <= {j_max} (f(-J)={f_lo:e}, f(+J)={f_hi:e})")]
    NoBracket { j_max: f64, f_lo: f64, f_hi: f64 },
    #[error("vacuum: density {rho:e} at node {node}")]
    Vacuum { node: usize, rho: f64 },
    #[error("step size {dt:e} exceeds the CFL bound {bound:e}")]
    StepSize { dt: f64, bound: f64 },
    #[error("symmetrizer weight not positive: min {min:e} at x = {x}")]
    SymmetrizerPositivity { min: f64, x: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("log-domain error: nonpositive value {value:e} at t = {t}")]
    LogDomain { t: f64, value: f64 },
    #[error("reference moment order m = 1 missing")]
    ReferenceMissing,
    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SepError {
    fn from(e: std::io::Error) -> Self {
        SepError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SepError>;
