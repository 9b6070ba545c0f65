//! Full scenario files: the topology plus scheduler, engine, routing and
//! FL sections.
//!
//! ```json
//! {
//!   "seed": 7,
//!   "nodes": [...], "links": [...],
//!   "channel_model": {"name": "log_normal_shadowing"},
//!   "interference_model": {"name": "airtime_sharing", "range_m": 30},
//!   "scheduler_period_s": 5, "mcs_table": "mcs.csv", "replay_field": "rssi",
//!   "netsim": {"chunk_size_bytes": 1500},
//!   "routing": {"temperature": [[0, 1.0], [10, 0.3]]},
//!   "fl": {"rounds": 50, "local_iters": 10}
//! }
//! ```
//!
//! Relative paths (`mcs_table`, `trace_file`) resolve against the scenario
//! file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::fl::{FlConfig, FlError};
use crate::netsim::{NetsimConfig, NetsimError};
use crate::routing::{QRoutingConfig, RoutingError};
use crate::scheduler::{McsTable, ReplayField, SchedulerConfig, SchedulerError, DEFAULT_PERIOD_S};
use crate::topology::{from_value_with_path, topology_from_value, Endpoint, Topology, TopologyError, TOPOLOGY_KEYS};
use crate::trace::{trace_file_name, Trace, TraceError};

const SECTION_KEYS: &[&str] = &["scheduler_period_s", "mcs_table", "replay_field", "netsim", "routing", "fl"];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("$.{0}: unknown top-level key")]
    UnknownKey(String),
    #[error("scheduler_period_s must be > 0, got {0}")]
    BadPeriod(f64),
    #[error("mcs table {path}: {source}")]
    McsTable { path: PathBuf, source: SchedulerError },
    #[error("trace file: {0}")]
    Trace(#[from] TraceError),
    #[error("netsim: {0}")]
    Netsim(#[from] NetsimError),
    #[error("routing: {0}")]
    Routing(#[from] RoutingError),
    #[error("fl: {0}")]
    Fl(#[from] FlError),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sections {
    scheduler_period_s: Option<f64>,
    mcs_table: Option<String>,
    #[serde(default)]
    replay_field: ReplayField,
    #[serde(default)]
    netsim: NetsimConfig,
    #[serde(default)]
    routing: QRoutingConfig,
    #[serde(default)]
    fl: FlConfig,
}

/// A validated scenario with its trace files and MCS table loaded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: Topology,
    pub scheduler: SchedulerConfig,
    pub netsim: NetsimConfig,
    pub routing: QRoutingConfig,
    pub fl: FlConfig,
    pub traces: BTreeMap<Endpoint, Trace>,
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&raw, &base)
    }

    pub fn from_json(raw: &str, base_dir: &Path) -> Result<Self, ScenarioError> {
        let value: Value = serde_json::from_str(raw)
            .map_err(|e| TopologyError::Schema { path: "$".into(), message: e.to_string() })?;
        Self::from_value(value, base_dir)
    }

    pub fn from_value(value: Value, base_dir: &Path) -> Result<Self, ScenarioError> {
        let topology = topology_from_value(&value)?;
        let Value::Object(map) = value else { unreachable!("checked by topology_from_value") };
        let mut rest = serde_json::Map::new();
        for (k, v) in map {
            if SECTION_KEYS.contains(&k.as_str()) {
                rest.insert(k, v);
            } else if !TOPOLOGY_KEYS.contains(&k.as_str()) {
                return Err(ScenarioError::UnknownKey(k));
            }
        }
        let sections: Sections = from_value_with_path(Value::Object(rest))?;
        let period_s = sections.scheduler_period_s.unwrap_or(DEFAULT_PERIOD_S);
        if !(period_s > 0.0) || !period_s.is_finite() {
            return Err(ScenarioError::BadPeriod(period_s));
        }
        let table = match &sections.mcs_table {
            Some(p) => {
                let path = base_dir.join(p);
                McsTable::load(&path).map_err(|source| ScenarioError::McsTable { path, source })?
            }
            None => McsTable::default(),
        };
        sections.netsim.validate()?;
        sections.routing.validate()?;
        sections.fl.validate()?;
        let traces = crate::scheduler::load_traces(&topology, base_dir)?;
        Ok(Scenario {
            topology,
            scheduler: SchedulerConfig { period_s, table, replay_field: sections.replay_field },
            netsim: sections.netsim,
            routing: sections.routing,
            fl: sections.fl,
            traces,
            base_dir: base_dir.to_path_buf(),
        })
    }

    /// Point every linked interface at `<dir>/<node>_<iface>.csv` and load
    /// those traces, leaving the channel model otherwise unchanged.
    pub fn with_trace_dir(mut self, dir: &Path) -> Result<Self, ScenarioError> {
        let linked: Vec<Endpoint> = self.topology.links.iter().flat_map(|l| [l.a.clone(), l.b.clone()]).collect();
        for node in &mut self.topology.nodes {
            for radio in &mut node.interfaces {
                if linked.iter().any(|e| e.node == node.id && e.iface == radio.iface_id) {
                    let path = dir.join(trace_file_name(&node.id, &radio.iface_id));
                    radio.trace_file = Some(path.to_string_lossy().into_owned());
                }
            }
        }
        self.traces = crate::scheduler::load_traces(&self.topology, Path::new(""))?;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.topology.seed = seed;
        self
    }

    pub fn with_rounds(mut self, rounds: usize) -> Self {
        self.fl.rounds = rounds;
        self
    }
}
