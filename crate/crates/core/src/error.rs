use thiserror::Error;

use crate::topology::NodeId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology field `{field}`: {reason}")]
    InvalidTopology { field: &'static str, reason: String },

    #[error("preference {0} is outside [0, 1]")]
    PreferenceOutOfRange(f64),

    #[error("invalid preference grid: {0}")]
    InvalidGrid(String),

    #[error("the terminal state has no actions")]
    TerminalState,

    #[error("node {action} is not a neighbor of node {node}")]
    IllegalAction { node: NodeId, action: NodeId },

    #[error("node {0} does not exist")]
    UnknownNode(NodeId),

    #[error("destination {0} is not tracked by this table")]
    UntrackedDestination(NodeId),

    #[error("value iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("improper policy: {0}")]
    ImproperPolicy(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
