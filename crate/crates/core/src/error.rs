use thiserror::Error;

use crate::network::Arc;

/// Errors produced by the analyses in this crate.
///
/// Server and flow indices carried by the variants are 0-based.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("bound is unbounded")]
    UnboundedInput,

    #[error("network is not a tree")]
    NotATree,

    #[error("flow {flow} of interest does not end at the root server {root}")]
    InterestNotAtRoot { flow: usize, root: usize },

    #[error("server {server} is not locally stable")]
    LocallyUnstable { server: usize },

    #[error("flow {flow} has zero rate; its delay is undefined")]
    ZeroRateFlow { flow: usize },

    #[error("no server is reachable from every other server")]
    NoRoot,

    #[error("arc ({}, {}) is not an arc of the induced graph", .0.0, .0.1)]
    UnknownArc(Arc),

    #[error("graph is still cyclic after removing the given arcs")]
    ResidualCyclic,

    #[error("the kept arcs do not form a forest")]
    DecompositionNotForest,

    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("matrix entry ({row}, {col}) is negative or not finite")]
    NegativeEntry { row: usize, col: usize },

    #[error("linear system is numerically singular")]
    SingularSystem,

    #[error("oracle enumeration limited to {max} servers, got {got}")]
    TooLarge { max: usize, got: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
