use thiserror::Error;

/// Errors surfaced by every module of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A formula is undefined for the given input (empty denominator sets,
    /// zero-norm weights, zero-variance samples).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
