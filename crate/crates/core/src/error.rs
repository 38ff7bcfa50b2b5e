use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("unsupported for variant {variant}: {what}")]
    UnsupportedVariant { variant: String, what: String },

    #[error("invalid token id {id} (vocabulary size {vocab_size})")]
    InvalidToken { id: usize, vocab_size: usize },

    #[error("malformed token sequence: {0}")]
    MalformedSequence(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("{path}: {kind}")]
    Load { path: PathBuf, kind: LoadError },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("key mismatch: missing ids {0:?}")]
    KeyMismatch(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Reasons a binary file (checkpoint or feature file) failed to load.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    BadVersion(u32),
    #[error("truncated payload: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("trailing bytes after payload: {0}")]
    Trailing(usize),
    #[error("expected {expected} streams, found {found}")]
    StreamCount { expected: u32, found: u32 },
    #[error("invalid header: {0}")]
    BadHeader(String),
}

impl Error {
    pub fn shape(context: impl Into<String>, expected: &[usize], actual: &[usize]) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }
}
