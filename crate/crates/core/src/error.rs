use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("joint {joint} at {value} outside limits [{min}, {max}]")]
    LimitViolation {
        joint: String,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Configuration problems, reported against the dotted path of the offending field.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error at `{field}`: {message}")]
    Parse { field: String, message: String },
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("bad override `{0}` (expected dotted.path=value)")]
    Override(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Dotted path of the field this error refers to, when there is one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Parse { field, .. } | ConfigError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("stage {stage} invalid for arrangement with {stages} stage(s)")]
    InvalidStage { stage: usize, stages: usize },
}

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("non-finite {what} at epoch {epoch}")]
    NonFinite { what: String, epoch: usize },
    #[error("observation has non-finite entry at index {0}")]
    NonFiniteObservation(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint magic")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint incompatible with configuration: {0}")]
    Incompatible(String),
}
