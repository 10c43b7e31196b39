use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown {kind} `{id}`")]
    NotFound { kind: &'static str, id: String },

    /// The attribute exists in the source data but none of its words had a vector.
    #[error("attribute `{0}` was dropped: none of its words has a word vector")]
    DroppedAttribute(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("numerical abort at step {step}: {detail}")]
    Numerical { step: u64, detail: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Process exit code used by the CLI: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Parse { .. }
            | Error::Io { .. }
            | Error::NotFound { .. }
            | Error::DroppedAttribute(_)
            | Error::Data(_)
            | Error::Checkpoint(_) => 2,
            Error::Shape { .. } | Error::NonFinite { .. } | Error::Numerical { .. } => 3,
        }
    }

    /// Stable machine-readable tag printed after `error_code:`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::NonFinite { .. } => "non_finite",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::NotFound { .. } => "not_found",
            Error::DroppedAttribute(_) => "dropped_attribute",
            Error::Data(_) => "data",
            Error::Checkpoint(_) => "checkpoint",
            Error::Config(_) => "config",
            Error::Usage(_) => "usage",
            Error::Numerical { .. } => "numerical",
        }
    }
}
