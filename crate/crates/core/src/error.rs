use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("sequence of {len} steps exceeds n_max = {n_max}")]
    SequenceTooLong { len: usize, n_max: usize },
    #[error("point ({x}, {y}) outside a {side}x{side} canvas")]
    OutOfRange { x: i64, y: i64, side: usize },
    #[error("lattice has no points")]
    EmptyLattice,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("token {token} outside vocabulary of size {vocab}")]
    TokenOutOfVocabulary { token: usize, vocab: usize },
    #[error("dataset contains no usable sketches")]
    DatasetEmpty,
    #[error("every item in the batch was skipped ({0} empty lattices)")]
    AllItemsSkipped(usize),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("failed to write checkpoint {path}: {source}")]
    CheckpointWriteFailure { path: String, source: io::Error },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Coarse failure classes, used by the command-line front end to pick an
/// exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Model,
}

impl Error {
    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MalformedRecord(_) => "MalformedRecord",
            Error::SequenceTooLong { .. } => "SequenceTooLong",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::EmptyLattice => "EmptyLattice",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::TokenOutOfVocabulary { .. } => "TokenOutOfVocabulary",
            Error::DatasetEmpty => "DatasetEmpty",
            Error::AllItemsSkipped(_) => "AllItemsSkipped",
            Error::InvalidImage(_) => "InvalidImage",
            Error::Config(_) => "Config",
            Error::Checkpoint(_) => "Checkpoint",
            Error::CheckpointWriteFailure { .. } => "CheckpointWriteFailure",
            Error::NonFinite(_) => "NonFinite",
            Error::Io(_) => "Io",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Usage,
            Error::ShapeMismatch(_)
            | Error::TokenOutOfVocabulary { .. }
            | Error::Checkpoint(_)
            | Error::CheckpointWriteFailure { .. }
            | Error::NonFinite(_) => ErrorClass::Model,
            _ => ErrorClass::Data,
        }
    }
}
