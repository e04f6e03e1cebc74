use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{}: format error @ line {line}: {msg}", path.display())]
    Format { path: PathBuf, line: usize, msg: String },

    #[error("missing field: {field} @ line {line}")]
    MissingField { field: &'static str, line: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unrecognized checkpoint format")]
    UnrecognizedCheckpoint,

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("shape validation failed for tensor '{name}': declared {shape:?} but payload holds {len} values")]
    TensorShape {
        name: String,
        shape: Vec<usize>,
        len: usize,
    },

    #[error("truncated checkpoint while reading {0}")]
    Truncated(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{what} hash mismatch: checkpoint has {expected}, current run has {found}")]
    HashMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
