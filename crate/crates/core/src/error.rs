use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error("nodes {first} and {second} share the position ({x}, {y})")]
    DuplicatePosition { first: usize, second: usize, x: f64, y: f64 },

    #[error("node {node} has a non-finite coordinate")]
    NonFinitePosition { node: usize },

    #[error("edge {edge} references node {node}, but the network has {node_count} nodes")]
    DanglingEdge { edge: usize, node: usize, node_count: usize },

    #[error("edge {edge} is a self-loop on node {node}")]
    SelfLoop { edge: usize, node: usize },

    #[error("directed edge {tail} -> {head} appears more than once")]
    DuplicateEdge { tail: usize, head: usize },

    #[error("edge id {0} is out of range")]
    InvalidEdge(usize),

    #[error("node id {0} is out of range")]
    InvalidNode(usize),

    #[error("assignment {id}: {reason}")]
    InvalidAssignment { id: usize, reason: String },

    #[error("assignment {id}: nodes {tail} -> {head} are not joined by an edge")]
    NotAPath { id: usize, tail: usize, head: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("orientation signatures disagree on partition ({0})")]
    MismatchedSignature(String),

    #[error("cannot OR-compose an empty classifier list")]
    EmptyClassifierList,

    #[error("no classifier is labelled {0:?}")]
    UnknownLabel(String),

    #[error("duplicate stage label {0:?} in plan")]
    DuplicateStage(String),

    #[error("generated network is disconnected after {attempts} attempts")]
    Disconnected { attempts: usize },

    #[error("could not sample a routable assignment after {attempts} attempts")]
    SamplingExhausted { attempts: usize },

    #[error("soundness violation: pair ({i}, {j}) platoons but was culled")]
    SoundnessViolation { i: usize, j: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
