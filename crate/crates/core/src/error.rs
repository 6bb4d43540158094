use std::fmt;

use thiserror::Error;

use crate::tree::NodeId;

/// Where differential subordination first fails.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Witness {
    /// `|Y_0| > |X_0|`.
    Root,
    /// `|dY| > |dX|` on the edge into `child`.
    Edge { parent: NodeId, child: NodeId },
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::Root => write!(f, "root (|Y_0| > |X_0|)"),
            Witness::Edge { parent, child } => write!(f, "edge {parent} -> {child}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("invalid stopping time: {0}")]
    InvalidStoppingTime(String),
    #[error("expected {expected} leaf values, found {found}")]
    LeafCount { expected: usize, found: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("processes live on different trees")]
    TreeMismatch,
    #[error("multiplier at node {node} has operator norm above 1")]
    NotContraction { node: NodeId },
    #[error("initial multiplier has operator norm above 1")]
    InitialNotContraction,
    #[error("multipliers must be indexed by parent node")]
    NotPredictable,
    #[error("martingale property fails at node {0}")]
    NotMartingale(NodeId),
    #[error("exponent must exceed 1, got {0}")]
    InvalidExponent(String),
    #[error("weight is not positive at node {0}")]
    NonPositiveWeight(NodeId),
    #[error("process is identically zero")]
    ZeroProcess,
    #[error("Y is not differentially subordinate to X: {0}")]
    NotSubordinate(Witness),
    #[error("negative value at leaf {0}")]
    NegativeValue(usize),
    #[error("sparse operator was not generated from this pair")]
    OperatorMismatch,
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("norm at leaf {0} is not an exact rational")]
    InexactNorm(usize),
    #[error("cannot parse scalar {0:?}")]
    ParseScalar(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
