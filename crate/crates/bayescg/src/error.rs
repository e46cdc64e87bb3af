use thiserror::Error;

/// Errors produced by solvers, factorizations, generators, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not symmetric: {0}")]
    NotSymmetric(String),

    #[error("solver breakdown at iteration {iter}: {quantity} = {value:e}")]
    Breakdown {
        iter: usize,
        quantity: &'static str,
        value: f64,
    },

    #[error("incomplete Cholesky breakdown at row {row}: pivot = {pivot:e}")]
    FactorizationBreakdown { row: usize, pivot: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether this error stems from user-supplied configuration rather than
    /// a runtime/solver failure. The CLI maps this to a distinct exit code.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidParameter(_) | Error::Parse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
