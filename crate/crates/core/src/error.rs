use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field failed validation. `field` is a dotted path
    /// into the document, e.g. `rigid_body.mass_kg`.
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("matrix `{0}` is not positive definite")]
    NotPositiveDefinite(String),

    #[error("duplicate actuator index {0}")]
    DuplicateActuator(usize),

    #[error("unknown vehicle `{0}`")]
    UnknownVehicle(String),

    #[error("unknown parameter key `{0}`")]
    UnknownKey(String),

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("data-driven rotor model on actuator {0} has no network weights")]
    MissingWeights(usize),

    #[error("{0}")]
    OutOfRange(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
