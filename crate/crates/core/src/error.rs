use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("game does not support this operation: {0}")]
    UnsupportedGame(String),

    #[error("symmetry violation: {0}")]
    SymmetryViolation(String),

    #[error("non-finite state at t = {time}")]
    NonFiniteState { time: f64 },

    #[error("step-size failure: total renormalization {total:.3e} exceeds {limit:.1e} at t = {time}")]
    StepSizeFailure { total: f64, limit: f64, time: f64 },

    #[error("no sign change on [0, 1]: h(0) = {h0}, h(1) = {h1}")]
    NoSignChange { h0: f64, h1: f64 },

    #[error("infeasible perturbation: {0}")]
    InfeasiblePerturbation(String),

    #[error("infeasible aggregate target: {0}")]
    InfeasibleTarget(String),

    #[error("assignment rule references node {node}, grid has {nodes} nodes")]
    NodeOutOfRange { node: usize, nodes: usize },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
