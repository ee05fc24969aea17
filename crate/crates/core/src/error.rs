use thiserror::Error;

/// Errors raised by model construction, fitting and I/O.
#[derive(Debug, Error)]
pub enum CureError {
    #[error("invalid basis size: K = {0}, need K >= 4")]
    InvalidBasisSize(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("insufficient events: {0}")]
    InsufficientEvents(String),

    #[error("value {value} outside domain {domain}")]
    Domain { value: f64, domain: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure at row {row}: {message}")]
    NumericalFailure { row: usize, message: String },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CureError {
    pub(crate) fn domain(value: f64, domain: impl Into<String>) -> Self {
        CureError::Domain {
            value,
            domain: domain.into(),
        }
    }

    /// Short machine-readable tag used in CLI error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            CureError::InvalidBasisSize(_) => "invalid_basis_size",
            CureError::InsufficientData(_) => "insufficient_data",
            CureError::InsufficientEvents(_) => "insufficient_events",
            CureError::Domain { .. } => "domain",
            CureError::InvalidParameter(_) => "invalid_parameter",
            CureError::InvalidInput(_) => "invalid_input",
            CureError::NumericalFailure { .. } => "numerical_failure",
            CureError::NotPositiveDefinite { .. } => "not_positive_definite",
            CureError::Parse { .. } => "parse",
            CureError::MissingColumn(_) => "missing_column",
            CureError::Io(_) => "io",
            CureError::Csv(_) => "csv",
            CureError::Json(_) => "json",
        }
    }

    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            CureError::NumericalFailure { .. } | CureError::NotPositiveDefinite { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, CureError>;
