use thiserror::Error;

/// Errors raised by the numerical kernels, solvers and experiment drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QnError {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("rank-one downdate broke down at index {index}")]
    DowndateBreakdown { index: usize },

    #[error("determinant overflows a double (logdet = {logdet})")]
    DetOverflow { logdet: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("curvature condition violated: s'y = {sy}")]
    CurvatureViolation { sy: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scale equation did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("line search: {0}")]
    LineSearch(String),

    #[error("non-finite objective or gradient at the evaluated point")]
    Evaluation,

    #[error("no closed-form influence function for the {0} family")]
    UnsupportedFamily(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for QnError {
    fn from(e: std::io::Error) -> Self {
        QnError::Io(e.to_string())
    }
}

impl From<csv::Error> for QnError {
    fn from(e: csv::Error) -> Self {
        QnError::Io(e.to_string())
    }
}


impl From<serde_json::Error> for QnError {
    fn from(e: serde_json::Error) -> Self {
        QnError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, QnError>;
