//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide error enumeration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("node index {node} out of range 1..={max}")]
    NodeOutOfRange { node: usize, max: usize },
    #[error("invalid probability for {name}: {value} (must be in {range})")]
    InvalidProbability {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("theta {0} is not on the coordinate grid of this ring")]
    ThetaOffGrid(String),
    #[error("theta {0} is degenerate here: the position coincides with the source")]
    DegenerateTheta(String),
    #[error("empty hop specification")]
    EmptySpec,
    #[error("truncation box {k} too small (need at least {min})")]
    BoxTooSmall { k: u64, min: u64 },
    #[error("not a directed tree: {0}")]
    NotATree(String),
    #[error("no directed path from node {from} to node {to}")]
    Unreachable { from: usize, to: usize },
    #[error("no stationary distribution: node {0} has zero reception probability")]
    NoStationaryDistribution(usize),
    #[error("node {0} is not present in the lambda table")]
    NotInTable(usize),
    #[error("empty node subset")]
    EmptySubset,
    #[error("age {0} below the minimal support value 1")]
    AgeBelowSupport(u64),
    #[error("joint histogram exceeded the cap of {cap} distinct age tuples")]
    JointSupportExceeded { cap: usize },
    #[error("need at least {need} samples, have {have}")]
    InsufficientSamples { need: u64, have: u64 },
    #[error("pairs are not jointly tracked: {0}")]
    PairsNotTracked(String),
    #[error("invalid slot outcome: {0}")]
    InvalidOutcome(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("power iteration did not converge (residual {residual:.3e})")]
    NotConverged { residual: f64 },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
