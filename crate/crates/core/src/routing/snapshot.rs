//! Portable Q-table snapshots for exporting trained agents and re-loading
//! them, possibly frozen, into another run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::qrouting::{AgentState, QEntry, QRouter, QRoutingConfig, QTable};
use super::RoutingError;
use crate::rng::SeedStreams;
use crate::topology::Network;

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSnapshot {
    /// `"src->dst"` to neighbor to entry.
    pub states: BTreeMap<String, BTreeMap<String, QEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QSnapshot {
    pub version: u32,
    pub agents: BTreeMap<String, AgentSnapshot>,
}

impl QSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }

    pub fn from_json(raw: &str) -> Result<Self, RoutingError> {
        let snap: QSnapshot = serde_json::from_str(raw).map_err(|e| RoutingError::Snapshot(e.to_string()))?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(RoutingError::Snapshot(format!("unsupported version {}", snap.version)));
        }
        Ok(snap)
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

pub fn export_qtables(router: &QRouter, net: &Network) -> QSnapshot {
    let mut agents = BTreeMap::new();
    for table in router.tables() {
        let mut states = BTreeMap::new();
        for (s, actions) in table.states() {
            let key = format!("{}->{}", net.name(s.src), net.name(s.dst));
            let acts = actions.iter().map(|(n, e)| (net.name(*n).to_string(), *e)).collect();
            states.insert(key, acts);
        }
        agents.insert(net.name(table.owner).to_string(), AgentSnapshot { states });
    }
    QSnapshot { version: SNAPSHOT_VERSION, agents }
}

/// Rebuild agents from a snapshot. Every node, state endpoint and neighbor
/// named in the snapshot must exist in `net`; all mismatches are reported.
pub fn import_qtables(
    snapshot: &QSnapshot,
    net: &Network,
    cfg: QRoutingConfig,
    streams: &SeedStreams,
) -> Result<QRouter, RoutingError> {
    let mut problems = Vec::new();
    let mut tables: Vec<Option<QTable>> =
        (0..net.node_count()).map(|n| net.is_router(n).then(|| QTable::new(n))).collect();
    for (name, agent) in &snapshot.agents {
        let Some(owner) = net.index_of(name) else {
            problems.push(format!("node {name} missing from topology"));
            continue;
        };
        if !net.is_router(owner) {
            problems.push(format!("node {name} is not a router"));
            continue;
        }
        let neighbors = net.neighbors(owner);
        for (key, actions) in &agent.states {
            let Some((src, dst)) = key.split_once("->") else {
                problems.push(format!("{name}: malformed state key '{key}'"));
                continue;
            };
            let (Some(src), Some(dst)) = (net.index_of(src), net.index_of(dst)) else {
                problems.push(format!("{name}: state {key} names a node missing from topology"));
                continue;
            };
            let mut row = Vec::with_capacity(actions.len());
            for (nb, entry) in actions {
                match net.index_of(nb).filter(|i| neighbors.contains(i)) {
                    Some(i) if entry.q.is_finite() => row.push((i, *entry)),
                    Some(_) => problems.push(format!("{name}: non-finite value for {key} via {nb}")),
                    None => problems.push(format!("{name}: neighbor {nb} of state {key} absent from topology")),
                }
            }
            // Match the ordering a live agent would have built.
            row.sort_by_key(|(i, _)| neighbors.iter().position(|n| n == i));
            tables[owner].as_mut().expect("router").entries.insert(AgentState { src, dst }, row);
        }
    }
    if !problems.is_empty() {
        return Err(RoutingError::SnapshotMismatch(problems));
    }
    Ok(QRouter::with_tables(net, cfg, streams, tables))
}
