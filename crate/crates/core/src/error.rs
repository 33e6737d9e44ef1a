//! Error types shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: at least one point is required")]
    EmptyInput,

    #[error("not enough points: {available} available, {requested} requested")]
    NotEnoughPoints { available: usize, requested: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid token {code} at (layer {layer}, position {position}): codebook size is {codebook_size}")]
    InvalidToken {
        layer: usize,
        position: usize,
        code: u32,
        codebook_size: u32,
    },

    #[error("sequence needs {needed} positional slots but the table holds {available}")]
    PositionalOverflow { needed: usize, available: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
