use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ScmError>;

#[derive(Debug, Error)]
pub enum ScmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("encoding mismatch: model expects {expected} encoded inputs, got {found}")]
    EncodingMismatch { expected: usize, found: usize },

    #[error("training failed: {0}")]
    TrainingFailed(String),

    #[error("model file: bad magic")]
    BadMagic,

    #[error("model file: unsupported version {0}")]
    UnsupportedVersion(u16),

    #[error("model file: checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },

    #[error("model file: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl ScmError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ScmError::InvalidInput(msg.into())
    }
}
