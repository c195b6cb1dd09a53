//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of two operands do not conform.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// An iterative solver produced a non-finite state.
    #[error("numeric failure at iteration {iteration}: {context}")]
    Numeric { iteration: usize, context: String },

    /// A retrieval was attempted against an empty memory.
    #[error("empty memory: {0}")]
    EmptyMemory(String),

    /// A persisted file is malformed. `offset` is the byte position of the
    /// field that failed to parse.
    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: u64, message: String },

    /// Caller-supplied argument outside its documented domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
