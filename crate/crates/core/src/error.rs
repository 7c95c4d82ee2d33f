use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("index {index} out of range for {what} of size {size}")]
    Index {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("sequence too short: {what} needs at least {min} tokens, got {got}")]
    TooShort { what: &'static str, min: usize, got: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("parse error at {path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("unknown tag {0:?} for the active taxonomy")]
    UnknownTag(String),

    #[error("taxonomy error: {0}")]
    Taxonomy(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("empty evaluation set")]
    EmptyEval,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint hash mismatch: file is corrupt")]
    HashMismatch,

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("taxonomy mismatch: checkpoint was trained on a different label set")]
    TaxonomyMismatch,

    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// 1 = usage/configuration, 2 = data, 3 = numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Numeric(_) => 3,
            Error::Seed { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
