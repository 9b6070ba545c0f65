//! One scenario run under one routing policy, end to end.

use thiserror::Error;

use crate::fl::{run_fl, FlError, FlRoundLog, FlState};
use crate::netsim::{delays_csv, events_jsonl, Engine, NetStats, NetsimError, RoutingMode};
use crate::rng::SeedStreams;
use crate::routing::{export_qtables, import_qtables, PolicyMode, QCounters, QRouter, QSnapshot, RoutingError, SNAPSHOT_VERSION};
use crate::scenario::Scenario;
use crate::scheduler::{LinkScheduler, SchedulerError, Timeline, TraceSink};
use crate::topology::Network;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Netsim(#[from] NetsimError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Fl(#[from] FlError),
}

#[derive(Debug, Clone)]
pub enum Policy {
    ShortestPath,
    MarlOnline,
    MarlFrozen(QSnapshot),
}

impl Policy {
    pub fn label(&self) -> &'static str {
        match self {
            Policy::ShortestPath => "shortest_path",
            Policy::MarlOnline => "marl_online",
            Policy::MarlFrozen(_) => "marl_frozen",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub policy: &'static str,
    pub rounds: Vec<FlRoundLog>,
    pub delays_csv: String,
    pub events_jsonl: String,
    /// Final agents; empty for shortest-path runs.
    pub snapshot: QSnapshot,
    /// Fingerprint of the agents before the first event.
    pub initial_fingerprint: String,
    pub q_counters: QCounters,
    pub net: NetStats,
}

/// Build the engine for `scenario` under `policy`, with no traffic yet.
pub fn build_engine(scenario: &Scenario, policy: &Policy) -> Result<Engine, ExperimentError> {
    let topo = &scenario.topology;
    let streams = SeedStreams::new(topo.seed);
    let net = Network::new(topo);
    let scheduler = LinkScheduler::new(topo, &net, scenario.scheduler.clone(), scenario.traces.clone(), &streams)?;
    let routing = match policy {
        Policy::ShortestPath => RoutingMode::ShortestPath,
        Policy::MarlOnline => {
            let cfg = crate::routing::QRoutingConfig { mode: PolicyMode::Online, ..scenario.routing.clone() };
            RoutingMode::QRouting(Box::new(QRouter::new(&net, cfg, &streams)))
        }
        Policy::MarlFrozen(snap) => {
            let cfg = crate::routing::QRoutingConfig { mode: PolicyMode::Frozen, ..scenario.routing.clone() };
            RoutingMode::QRouting(Box::new(import_qtables(snap, &net, cfg, &streams)?))
        }
    };
    Ok(Engine::new(net, scenario.netsim.clone(), scheduler, routing, &streams)?)
}

fn snapshot_of(engine: &Engine) -> QSnapshot {
    match engine.q_router() {
        Some(q) => export_qtables(q, engine.net()),
        None => QSnapshot { version: SNAPSHOT_VERSION, agents: Default::default() },
    }
}

pub fn run_experiment(scenario: &Scenario, policy: &Policy) -> Result<RunOutput, ExperimentError> {
    let mut engine = build_engine(scenario, policy)?;
    let initial_fingerprint = snapshot_of(&engine).fingerprint();
    let streams = SeedStreams::new(scenario.topology.seed);
    let mut state = FlState::new(engine.net(), &scenario.fl, &streams)?;
    let rounds = run_fl(&mut engine, &scenario.fl, &mut state)?;
    let net = engine.net();
    Ok(RunOutput {
        policy: policy.label(),
        rounds,
        delays_csv: delays_csv(engine.delays(), |i| net.name(i).to_string()),
        events_jsonl: events_jsonl(engine.log()),
        snapshot: snapshot_of(&engine),
        initial_fingerprint,
        q_counters: engine.q_router().map(QRouter::counters).unwrap_or_default(),
        net: engine.stats(),
    })
}

/// Standalone scheduler run over `[0, horizon_s]` with no traffic, optionally
/// writing trace rows (generation mode).
pub fn scheduler_timeline(
    scenario: &Scenario,
    horizon_s: f64,
    sink: Option<&mut dyn TraceSink>,
) -> Result<Timeline, ExperimentError> {
    let topo = &scenario.topology;
    let net = Network::new(topo);
    let streams = SeedStreams::new(topo.seed);
    let mut scheduler = LinkScheduler::new(topo, &net, scenario.scheduler.clone(), scenario.traces.clone(), &streams)?;
    Ok(scheduler.run_scheduler(horizon_s, sink)?)
}
