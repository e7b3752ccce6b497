use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Inputs violate a documented precondition (bad shapes, duplicate pilots,
    /// inconsistent configuration).
    #[error("validation error: {0}")]
    Validation(String),

    /// A value is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The convex solver stopped without meeting its tolerance. The best iterate
    /// found so far is carried along.
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<(f64, f64)>,
    },

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error is caused by user input rather than an internal fault.
    pub fn is_user_error(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Domain(_) | Error::Parse(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(format!("line {} column {}: {}", e.line(), e.column(), e))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
