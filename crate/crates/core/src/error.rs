use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A caller-supplied value violates a hard invariant. `field` names the
    /// offending input so front ends can highlight it.
    #[error("invalid {field}: {message}")]
    InvalidInput { field: String, message: String },

    /// Cholesky pivot at `pivot` (0-based) fell below the positivity tolerance.
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("numerical failure at time index {time_index}: {message}")]
    NumericalFailure { time_index: usize, message: String },

    #[error("trajectory {trajectory}: {source}")]
    Trajectory {
        trajectory: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn numerical(time_index: usize, message: impl Into<String>) -> Self {
        Error::NumericalFailure {
            time_index,
            message: message.into(),
        }
    }

    /// Field name carried by validation errors, looking through trajectory wrappers.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::InvalidInput { field, .. } => Some(field),
            Error::Trajectory { source, .. } => source.field(),
            _ => None,
        }
    }

    /// Time index carried by numerical failures, looking through trajectory wrappers.
    pub fn time_index(&self) -> Option<usize> {
        match self {
            Error::NumericalFailure { time_index, .. } => Some(*time_index),
            Error::Trajectory { source, .. } => source.time_index(),
            _ => None,
        }
    }

    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericalFailure { .. } | Error::NotPositiveDefinite { .. } => true,
            Error::Trajectory { source, .. } => source.is_numerical(),
            Error::InvalidInput { .. } => false,
        }
    }
}

/// Soft-validation finding: the input is usable but outside recommended ranges.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Warning {
    pub field: String,
    pub message: String,
}

impl Warning {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Warning {
            field: field.into(),
            message: message.into(),
        }
    }
}
