//! Error type shared by the tensor engine.

use thiserror::Error;

/// Errors surfaced by tensor construction, kernels, and codecs.
#[derive(Debug, Error)]
pub enum CoreError {
    /// An operand's shape does not satisfy an operation's contract.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },

    /// An argument is structurally valid but semantically out of range.
    #[error("invalid argument in {context}: {message}")]
    InvalidArgument { context: String, message: String },

    /// Data contains NaN or infinities where finite values are required.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// A serialized buffer violates its format contract.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub fn shape(context: impl Into<String>, expected: impl Into<String>, got: impl Into<String>) -> Self {
        CoreError::ShapeMismatch {
            context: context.into(),
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub fn invalid(context: impl Into<String>, message: impl Into<String>) -> Self {
        CoreError::InvalidArgument {
            context: context.into(),
            message: message.into(),
        }
    }
}
