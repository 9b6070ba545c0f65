//! Structured event log records and per-hop delay samples.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub const DELAY_HEADER: &str = "t,node,next_hop,flow_src,flow_dst,delay_s";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    QueueOverflow,
    ChannelLoss,
    NoRoute,
    TtlExpired,
}

/// One line of the JSON-lines event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogRecord {
    Tick { t: f64, links_up: usize, links_total: usize },
    TraceExhausted { t: f64, node: String, iface: String },
    FlowStart { t: f64, flow: usize, src: String, dst: String, bytes: u64, chunks: u64 },
    FlowComplete { t: f64, flow: usize, src: String, dst: String, duration_s: f64, retransmissions: u64 },
    FlowFailed { t: f64, flow: usize, src: String, dst: String },
    Drop { t: f64, flow: usize, chunk: u32, node: String, next_hop: Option<String>, reason: DropReason },
    RoundTimer { t: f64, tag: u64 },
    RoundComplete { t: f64, round: usize, loss: f64, slowest_worker: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelaySample {
    pub t: f64,
    pub node: usize,
    pub next_hop: usize,
    pub flow_src: usize,
    pub flow_dst: usize,
    pub delay_s: f64,
}

pub fn delays_csv(samples: &[DelaySample], name: impl Fn(usize) -> String) -> String {
    let mut out = String::with_capacity(64 * (samples.len() + 1));
    out.push_str(DELAY_HEADER);
    out.push('\n');
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.t,
            name(s.node),
            name(s.next_hop),
            name(s.flow_src),
            name(s.flow_dst),
            s.delay_s
        );
    }
    out
}

pub fn events_jsonl(records: &[LogRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("log record serializes"));
        out.push('\n');
    }
    out
}
