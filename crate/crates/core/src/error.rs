use thiserror::Error;

use crate::newton::NewtonResult;
use crate::step_control::Method;

#[derive(Debug, Clone, Error)]
pub enum NewtonError {
    #[error(
        "Newton iteration did not converge after {} iterations (residual {:e})",
        best.iterations,
        best.final_residual
    )]
    NonConvergence { best: NewtonResult },
    #[error("singular Jacobian at Newton iteration {iterations}")]
    SingularJacobian { iterations: usize },
    #[error("residual has length {actual}, expected {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Error)]
pub enum StepError {
    #[error("invalid multistep history: {0}")]
    InvalidHistory(&'static str),
    #[error(transparent)]
    Newton(#[from] NewtonError),
}

#[derive(Debug, Clone, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Error)]
pub enum IntegrationError {
    #[error("{method} step failed at t={time} with h={h}: {source}")]
    StepFailure {
        method: Method,
        time: f64,
        h: f64,
        #[source]
        source: StepError,
    },
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Error)]
pub enum ModelError {
    #[error("equilibrium not found: {0}")]
    EquilibriumNotFound(#[source] NewtonError),
    #[error("fixture line {line}: {message}")]
    Fixture { line: usize, message: String },
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
    #[error("bus {0} does not exist")]
    InvalidBus(usize),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("traces cover different time ranges: [{ref_start}, {ref_end}] vs [{cand_start}, {cand_end}]")]
    MismatchedRange {
        ref_start: f64,
        ref_end: f64,
        cand_start: f64,
        cand_end: f64,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
