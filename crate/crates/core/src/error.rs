use thiserror::Error;

pub type Result<T> = std::result::Result<T, BeamError>;

#[derive(Debug, Error)]
pub enum BeamError {
    /// Bad user input: a precondition or a config field.
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    /// The numerics could not deliver (non-convergence, singular systems, ...).
    #[error("numerical failure [{reason}]: {detail}")]
    Numerical { reason: &'static str, detail: String },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl BeamError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        BeamError::Validation { field: field.into(), reason: reason.into() }
    }

    pub fn numerical(reason: &'static str, detail: impl Into<String>) -> Self {
        BeamError::Numerical { reason, detail: detail.into() }
    }

    /// Process exit code: 2 for validation problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            BeamError::Numerical { .. } => 3,
            _ => 2,
        }
    }

    /// Short machine-readable tag.
    pub fn reason(&self) -> &str {
        match self {
            BeamError::Validation { .. } => "validation",
            BeamError::Numerical { reason, .. } => reason,
            BeamError::Io(_) => "io",
            BeamError::Json(_) => "json",
        }
    }
}
