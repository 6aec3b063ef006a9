use alloc::string::String;

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A tensor or layer configuration did not line up.
    #[error("shape mismatch at {at}: {detail}")]
    Shape { at: String, detail: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (learning rate too high?)")]
    NonFiniteLoss { epoch: usize, batch: usize },

    /// Loss became NaN or infinite inside a single optimizer step.
    #[error("non-finite loss during update (learning rate too high?)")]
    Diverged,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("negative loss {0}")]
    NegativeLoss(f64),

    #[error("labels must contain both classes")]
    SingleClass,
}

impl Error {
    pub(crate) fn shape(at: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Shape {
            at: at.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
