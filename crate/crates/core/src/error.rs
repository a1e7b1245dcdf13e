use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{context}: linear solve stalled at residual {residual:.3e} after {iterations} iterations")]
    SolverDiverged { context: &'static str, residual: f64, iterations: usize },
    #[error("advective CFL {cfl:.3} exceeds limit {limit:.3}; step rejected")]
    CflViolation { cfl: f64, limit: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
