use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("matrix is not row-stochastic (max row error {max_row_err:e})")]
    NotStochastic { max_row_err: f64 },

    #[error("invalid problem: {0}")]
    Problem(String),

    #[error("node id {node} out of range for {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: String, got: String },

    #[error("linear system is singular")]
    Singular,

    #[error("invalid plan: {0}")]
    Plan(String),

    /// Raised when an iterate becomes non-finite or exceeds the blow-up bound.
    #[error("divergence detected at round {round}")]
    Divergence { round: usize },

    #[error("metric `{0}` is not available for this problem")]
    UnsupportedMetric(&'static str),

    #[error("config error:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Trace {
        path: PathBuf,
        line: usize,
        msg: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }
}
