use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown viewpoint id {0}")]
    UnknownViewpoint(usize),

    #[error("generation exhausted after {tries} tries: {what}")]
    GenerationExhausted { what: String, tries: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("format version mismatch: expected {expected}, found {found}")]
    Version { expected: String, found: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("out-of-vocabulary token {0:?}")]
    Oov(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("empty report: no episodes to aggregate")]
    EmptyReport,

    #[error("non-finite loss {loss} at step {step} (batch hash {batch_hash})")]
    NonFiniteLoss {
        step: usize,
        loss: f64,
        batch_hash: String,
    },

    #[error("bad checkpoint magic: expected \"NVGN\", found {0:?}")]
    CheckpointMagic([u8; 4]),

    #[error("checkpoint version mismatch: expected {expected}, found {found}")]
    CheckpointVersion { expected: u32, found: u32 },

    #[error("checkpoint checksum mismatch (file truncated or corrupted)")]
    CheckpointChecksum,

    #[error("checkpoint layout mismatch: {0}")]
    CheckpointLayout(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 config, 3 data, 4 numeric abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::NonFiniteLoss { .. } => 4,
            _ => 3,
        }
    }
}
