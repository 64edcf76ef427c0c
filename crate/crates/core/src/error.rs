use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid BIO sequence at position {position}: {msg}")]
    Bio { position: usize, msg: String },

    #[error("corpus too small: need {required} sentences, have {available}")]
    InsufficientData { required: usize, available: usize },

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("instance too large for enumeration: {0} paths")]
    TooLarge(f64),

    #[error("unknown language `{0}`")]
    UnknownLanguage(String),

    #[error("invalid tag index {index} (tag set has {size} tags)")]
    InvalidTag { index: usize, size: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model format error: {0}")]
    Format(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
