use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A solver hypothesis (relaxation range, step exponent, ...) is not met.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("degenerate constraint: f(x) = {value:e} > 0 with zero subgradient")]
    DegenerateConstraint { value: f64 },

    #[error("iterate diverged at iteration {iteration}: norm {norm:e} exceeds guard")]
    Divergence { iteration: usize, norm: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("internal consistency check failed at iteration {iteration}: {message}")]
    Invariant { iteration: usize, message: String },

    #[error("reference solution not reached: residual {residual:e} after {iterations} iterations")]
    ReferenceNotReached { residual: f64, iterations: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes and error reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numeric,
    Invariant,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::DimensionMismatch { .. }
            | Error::InvalidArgument(_)
            | Error::Hypothesis(_)
            | Error::Json(_) => ErrorClass::Config,
            Error::NonFinite(_)
            | Error::DegenerateConstraint { .. }
            | Error::Divergence { .. }
            | Error::Numeric(_)
            | Error::ReferenceNotReached { .. } => ErrorClass::Numeric,
            Error::Invariant { .. } => ErrorClass::Invariant,
            Error::Io(_) => ErrorClass::Io,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn hypothesis(msg: impl Into<String>) -> Self {
        Error::Hypothesis(msg.into())
    }
}
