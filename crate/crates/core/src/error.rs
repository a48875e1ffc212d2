//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shape does not match what a layer expects. Carries the index
    /// of the offending layer within the network.
    #[error("layer {layer}: {message}")]
    Shape { layer: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed or inconsistent input data (dataset files, checkpoints).
    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A violated internal invariant; indicates a bug, not bad input.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(layer: usize, message: impl Into<String>) -> Self {
        Error::Shape {
            layer,
            message: message.into(),
        }
    }
}
