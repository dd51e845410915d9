use thiserror::Error;

/// Errors raised while building problems or running the solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("empty region")]
    EmptyRegion,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no finite stepsize bound; set a gamma cap")]
    UnboundedStepsize,

    #[error("stepsize {gamma} violates the admissible bound {bound}")]
    StepsizeOutOfRange { gamma: f64, bound: f64 },

    #[error("prox of g requested with gamma {gamma} >= prox bound {threshold}")]
    ProxBound { gamma: f64, threshold: f64 },

    #[error("descent inequality violated at iteration {k}: excess {excess:e}")]
    DescentViolation { k: usize, excess: f64 },

    #[error("grid of {0} points exceeds the enumeration limit")]
    GridTooLarge(u128),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
