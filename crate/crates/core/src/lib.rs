//! Deterministic discrete-event simulation of federated learning over
//! multi-hop wireless mesh networks.
//!
//! The pipeline runs from channel models (analytic or trace-driven) through a
//! periodic link scheduler (SNR to MCS to rate) into a packet engine whose
//! forwarding decisions come from either minimum-hop routing or per-router
//! Q-learning agents. FL rounds (local SGD plus FedAvg) ride on top as
//! network flows.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod experiment;
pub mod fixtures;
pub mod fl;
pub mod netsim;
pub mod rng;
pub mod routing;
pub mod scenario;
pub mod scheduler;
pub mod topology;
pub mod trace;

pub use channel::{ChannelModelConfig, InterferenceModelConfig, LinkCondition};
pub use experiment::{build_engine, run_experiment, scheduler_timeline, ExperimentError, Policy, RunOutput};
pub use fl::{FlConfig, FlRoundLog};
pub use netsim::{Engine, NetsimConfig};
pub use rng::SeedStreams;
pub use routing::{PolicyName, QRouter, QSnapshot};
pub use scenario::{Scenario, ScenarioError};
pub use scheduler::{LinkScheduler, LinkState, McsTable, Timeline};
pub use topology::{parse_config, Network, Topology};
pub use trace::{Trace, TraceRecord};
