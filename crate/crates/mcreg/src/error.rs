//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape or emptiness violation on a matrix operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A matrix entry was NaN or infinite where finite values are required.
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    /// Cholesky pivot fell below the positivity tolerance.
    #[error("matrix is not positive definite: pivot {pivot} at index {index}")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    /// Invalid parameter value.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Coordinate descent failed to converge within the sweep budget.
    /// Carries the last iterate and the worst stationarity violation.
    #[error("solver did not converge after {sweeps} sweeps (max KKT violation {max_kkt:.3e})")]
    NonConvergence {
        sweeps: usize,
        max_kkt: f64,
        last_iterate: Vec<f64>,
    },

    /// A per-response fit failed; `response` is the zero-based response index.
    #[error("fit failed for response {response} ({stage}): {source}")]
    ResponseFit {
        response: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    /// Zero residual sum of squares makes the information criterion undefined.
    #[error("degenerate fit for response {response}: zero residual sum of squares")]
    DegenerateFit { response: usize },

    /// No usable cell on the tuning grid.
    #[error("tuning failed: {0}")]
    TuningFailed(String),

    /// Symmetrization found opposing signs under the strict policy.
    #[error("sign conflict at response pairs {pairs:?}")]
    SignConflict { pairs: Vec<(usize, usize)> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed numeric text input; `row`/`col` are one-based.
    #[error("parse error in {path} at row {row}, column {col}: {message}")]
    Parse {
        path: String,
        row: usize,
        col: usize,
        message: String,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: String, message: String },
}

impl Error {
    /// Process exit code for the CLI: 3 for numerical failures, 4 for i/o,
    /// 2 for anything that amounts to bad usage.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::NotPositiveDefinite { .. }
            | Error::NonConvergence { .. }
            | Error::ResponseFit { .. }
            | Error::DegenerateFit { .. }
            | Error::TuningFailed(_)
            | Error::SignConflict { .. }
            | Error::NonFinite { .. } => 3,
            Error::Io(_) | Error::Parse { .. } | Error::Format { .. } => 4,
            Error::Dimension(_) | Error::Parameter(_) => 2,
        }
    }
}
