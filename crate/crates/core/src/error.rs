use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("column {index} has norm {norm:e}, too small to normalize")]
    ZeroColumn { index: usize, norm: f64 },

    #[error("expected a unit vector, got norm {norm}")]
    NotUnit { norm: f64 },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("coefficient Gram matrix is rank deficient (sigma_min={sigma_min:e}, sigma_max={sigma_max:e})")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },

    #[error("singular block in block inversion: {0}")]
    SingularBlock(&'static str),

    #[error("entry ({row}, {col}) lies outside the reference support")]
    SupportViolation { row: usize, col: usize },

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field,
        reason: reason.into(),
    }
}
