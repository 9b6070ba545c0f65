//! Next-hop selection: a minimum-hop baseline and multi-agent Q-routing.

mod qrouting;
mod shortest;
mod snapshot;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use qrouting::{
    candidate_actions, greedy_select, q_update, softmax_probabilities, softmax_select, AgentState, PolicyMode,
    QCounters, QEntry, QRouter, QRoutingConfig, QTable, RewardGranularity, TemperatureSchedule,
};
pub use shortest::{hop_distances, shortest_path_next_hop, ShortestPath};
pub use snapshot::{export_qtables, import_qtables, AgentSnapshot, QSnapshot, SNAPSHOT_VERSION};

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("no route from {node} to {dst} over up links")]
    NoRoute { node: String, dst: String },
    #[error("no candidate actions to choose from")]
    NoActions,
    #[error("invalid routing config: {0}")]
    BadConfig(String),
    #[error("action {action} not present in the Q-table")]
    UnknownAction { action: usize },
    #[error("node {0} is not a routing agent")]
    NotAnAgent(usize),
    #[error("malformed Q-table snapshot: {0}")]
    Snapshot(String),
    #[error("Q-table snapshot does not fit the topology: {}", .0.join("; "))]
    SnapshotMismatch(Vec<String>),
    #[error("unknown policy '{0}' (expected shortest_path, marl_online or marl_frozen=<snapshot>)")]
    UnknownPolicy(String),
}

/// Routing policy as named on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyName {
    ShortestPath,
    MarlOnline,
    /// Frozen agents loaded from the snapshot at this path.
    MarlFrozen(String),
}

impl PolicyName {
    /// Short label without the snapshot path.
    pub fn label(&self) -> &'static str {
        match self {
            PolicyName::ShortestPath => "shortest_path",
            PolicyName::MarlOnline => "marl_online",
            PolicyName::MarlFrozen(_) => "marl_frozen",
        }
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyName::MarlFrozen(p) => write!(f, "marl_frozen={p}"),
            other => f.write_str(other.label()),
        }
    }
}

impl FromStr for PolicyName {
    type Err = RoutingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shortest_path" => Ok(PolicyName::ShortestPath),
            "marl_online" => Ok(PolicyName::MarlOnline),
            _ => match s.strip_prefix("marl_frozen=") {
                Some(p) if !p.is_empty() => Ok(PolicyName::MarlFrozen(p.to_string())),
                _ => Err(RoutingError::UnknownPolicy(s.to_string())),
            },
        }
    }
}
