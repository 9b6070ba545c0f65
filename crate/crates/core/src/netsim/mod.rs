//! Discrete-event packet engine: event queue, per-node flow tables,
//! per-directed-link FIFO transmitters and per-hop delay telemetry.

mod engine;
mod event;
mod telemetry;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::{Chunk, Engine, FlowInfo, FlowStatus, HopRecord, NetStats, Notification, RoutingMode};
pub use event::{Event, EventKind, EventQueue};
pub use telemetry::{delays_csv, events_jsonl, DelaySample, DropReason, LogRecord, DELAY_HEADER};

use crate::routing::RoutingError;
use crate::scheduler::SchedulerError;

/// Largest chunk the engine accepts.
pub const MAX_CHUNK_BYTES: u32 = 64 * 1024;

#[derive(Debug, Error)]
pub enum NetsimError {
    #[error("flow source and destination are both {0}")]
    SelfFlow(String),
    #[error("unknown node index {0}")]
    UnknownNode(usize),
    #[error("flow size must be positive")]
    EmptyFlow,
    #[error("unknown flow {0}")]
    UnknownFlow(usize),
    #[error("flow {0} has not completed")]
    Incomplete(usize),
    #[error("time {t} is before the current clock {clock}")]
    TimeTravel { t: f64, clock: f64 },
    #[error("simulation exceeded max_sim_time_s = {0}")]
    SimTimeExceeded(f64),
    #[error("invalid netsim config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetsimConfig {
    pub chunk_size_bytes: u32,
    pub queue_capacity: usize,
    /// Propagation delay for every hop unless overridden below.
    pub propagation_delay_s: f64,
    /// Per directed link overrides keyed `"A->B"`.
    pub link_propagation_delay_s: BTreeMap<String, f64>,
    /// Chunks of one flow allowed in the network at once; 0 means unlimited.
    pub flow_window: u32,
    /// Lower bound on the retransmission wait of reliable flows.
    pub min_rto_s: f64,
    pub ttl: u32,
    pub max_sim_time_s: f64,
    /// Keep per-hop delay samples for the delay CSV.
    pub record_delays: bool,
}

impl Default for NetsimConfig {
    fn default() -> Self {
        NetsimConfig {
            chunk_size_bytes: 1500,
            queue_capacity: 100,
            propagation_delay_s: 0.0,
            link_propagation_delay_s: BTreeMap::new(),
            flow_window: 16,
            min_rto_s: 0.2,
            ttl: 64,
            max_sim_time_s: 1.0e7,
            record_delays: true,
        }
    }
}

impl NetsimConfig {
    pub fn validate(&self) -> Result<(), NetsimError> {
        let bad = |m: String| Err(NetsimError::BadConfig(m));
        if self.chunk_size_bytes == 0 || self.chunk_size_bytes > MAX_CHUNK_BYTES {
            return bad(format!("chunk_size_bytes {} outside 1..={MAX_CHUNK_BYTES}", self.chunk_size_bytes));
        }
        if self.queue_capacity == 0 {
            return bad("queue_capacity must be >= 1".into());
        }
        if !(self.propagation_delay_s >= 0.0) || !self.propagation_delay_s.is_finite() {
            return bad("propagation_delay_s must be finite and >= 0".into());
        }
        for (k, v) in &self.link_propagation_delay_s {
            if !(*v >= 0.0) || !v.is_finite() {
                return bad(format!("link_propagation_delay_s[{k}] must be finite and >= 0"));
            }
        }
        if !(self.min_rto_s > 0.0) {
            return bad("min_rto_s must be > 0".into());
        }
        if self.ttl == 0 {
            return bad("ttl must be >= 1".into());
        }
        if !(self.max_sim_time_s > 0.0) {
            return bad("max_sim_time_s must be > 0".into());
        }
        Ok(())
    }

    /// Chunks needed to carry `size_bytes`.
    pub fn chunk_count(&self, size_bytes: u64) -> u64 {
        size_bytes.div_ceil(self.chunk_size_bytes as u64)
    }
}

/// Serialization delay of `bytes` at `rate_mbps`.
pub fn tx_delay_s(bytes: u32, rate_mbps: f64) -> f64 {
    bytes as f64 * 8.0 / (rate_mbps * 1e6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn chunking() {
        let c = NetsimConfig::default();
        assert_eq!(c.chunk_count(5_800_000), 3867);
        assert_eq!(c.chunk_count(1), 1);
        assert_eq!(c.chunk_count(1500), 1);
        assert_eq!(c.chunk_count(1501), 2);
    }

    #[test]
    fn serialization_delay() {
        assert_relative_eq!(tx_delay_s(1500, 39.0), 307.692e-6, max_relative = 1e-5);
    }

    #[test]
    fn config_bounds() {
        let mut c = NetsimConfig::default();
        assert!(c.validate().is_ok());
        c.chunk_size_bytes = MAX_CHUNK_BYTES + 1;
        assert!(c.validate().is_err());
    }
}
