use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NiocError {
    #[error("covariance is singular even after jitter escalation ({context})")]
    SingularCovariance { context: String },

    #[error("covariance is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("non-finite value encountered in {context}")]
    NonFiniteValue { context: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown task '{0}'")]
    UnknownTask(String),

    #[error("task '{task}' does not provide the '{variant}' variant")]
    UnsupportedVariant { task: String, variant: String },

    #[error("missing parameter '{0}'")]
    MissingParameter(String),

    #[error("parameter '{name}' must be positive, got {value}")]
    NonPositiveParameter { name: String, value: f64 },

    #[error("true value of '{0}' is zero; relative error undefined")]
    DivisionByZero(String),

    #[error("value function diverged at step {step} (Hessian norm {norm:e})")]
    DivergedValueRecursion { step: usize, norm: f64 },

    #[error("every optimizer restart failed")]
    AllRestartsFailed,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("malformed JSON: {0}")]
    Json(String),
}

impl NiocError {
    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        NiocError::NonFiniteValue {
            context: context.into(),
        }
    }
}

impl From<std::io::Error> for NiocError {
    fn from(e: std::io::Error) -> Self {
        NiocError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for NiocError {
    fn from(e: serde_json::Error) -> Self {
        NiocError::Json(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, NiocError>;
