use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SbmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SbmError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: self loop on node {node}")]
    SelfLoop { line: usize, node: usize },

    #[error("line {line}: duplicate edge {u}-{v}")]
    DuplicateEdge { line: usize, u: usize, v: usize },

    #[error("line {line}: node id {id} is out of range for n={n}")]
    NodeOutOfRange { line: usize, id: usize, n: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("graph has no edges")]
    NoEdges,

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("exhaustive search is limited to n <= {max}, got n={n}")]
    TooLarge { n: usize, max: usize },

    #[error("BIC* needs at least one edge")]
    EmptyEffectiveSample,

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("nodes missing from graph for group {group}: {ids:?}")]
    MissingNodes { group: String, ids: Vec<String> },
}

impl SbmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SbmError::Io {
            path: path.into(),
            source,
        }
    }
}
