use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied a malformed input (wrong dimension, out of bounds, ...).
    #[error("invalid input: {0}")]
    Input(String),

    #[error("numerical failure in {context}: {detail}")]
    Numerical { context: String, detail: String },

    #[error("training failed (member {member:?}) at epoch {epoch}: {detail}")]
    Training {
        member: Option<usize>,
        epoch: usize,
        detail: String,
    },

    /// Operation not valid in the current state (e.g. too few observations).
    #[error("invalid state: {0}")]
    State(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn numerical(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
            detail: detail.into(),
        }
    }
}
