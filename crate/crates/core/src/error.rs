use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = TsamError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TsamError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("masked softmax has no allowed position")]
    EmptySupport,

    #[error("edge ({src}, {dst}) out of range for {n} nodes")]
    NodeIndex { src: usize, dst: usize, n: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("no edge falls inside the configured snapshot span ({dropped} dropped)")]
    EmptySlice { dropped: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("numeric divergence at epoch {epoch}: {msg}")]
    Divergence { epoch: usize, msg: String },

    #[error("metric undefined: {0} set is empty")]
    UndefinedMetric(&'static str),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),
}

impl TsamError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TsamError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        TsamError::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
