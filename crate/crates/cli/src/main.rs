//! `meshfl`: validate scenarios, run experiments, compare routing policies
//! and generate or replay channel traces.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod artifacts;
mod compare;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use meshfl_core::experiment::{run_experiment, scheduler_timeline, Policy};
use meshfl_core::routing::{PolicyName, QSnapshot};
use meshfl_core::scenario::Scenario;
use meshfl_core::scheduler::DirTraceSink;
use meshfl_core::Network;

#[derive(Parser, Debug)]
#[command(name = "meshfl", version, about = "Federated learning over simulated wireless mesh networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate a scenario.
    Validate(ConfigArg),
    /// Run one scenario under one routing policy.
    Run(RunArgs),
    /// Run several policies over several seeds and summarise time per round.
    Compare(CompareArgs),
    /// Generate or replay channel traces.
    #[command(subcommand)]
    Trace(TraceCommand),
}

#[derive(Args, Debug)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// shortest_path | marl_online | marl_frozen=<snapshot.json>
    #[arg(long, default_value = "shortest_path")]
    policy: String,
    #[arg(long)]
    rounds: Option<usize>,
}

#[derive(Args, Debug)]
pub(crate) struct CompareArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated seeds; defaults to the scenario seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Alias for a single seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated subset of shortest_path, marl_online, marl_frozen.
    #[arg(long, value_delimiter = ',', default_value = "shortest_path,marl_online,marl_frozen")]
    policies: Vec<String>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Parallel simulation instances.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// First round (1-based) of the summary window.
    #[arg(long, default_value_t = 1)]
    from_round: usize,
    /// Last round of the summary window; defaults to the final round.
    #[arg(long)]
    to_round: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum TraceCommand {
    /// Run the link scheduler alone and write one CSV per interface.
    Generate(TraceGenArgs),
    /// Drive every linked interface from trace files, then run the experiment.
    Replay(TraceReplayArgs),
}

#[derive(Args, Debug)]
struct TraceGenArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 50.0)]
    horizon: f64,
}

#[derive(Args, Debug)]
struct TraceReplayArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory holding `<node>_<iface>.csv` files.
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Horizon of the standalone replay timeline; defaults to the longest trace.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value = "shortest_path")]
    policy: String,
    #[arg(long)]
    rounds: Option<usize>,
}

/// Failure classes mapped to exit codes.
pub(crate) enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

pub(crate) trait Classify<T> {
    fn invalid(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for std::result::Result<T, E> {
    fn invalid(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Invalid(e.into()))
    }
    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("MESHFL_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate(a) => validate(&a.config),
        Command::Run(a) => run(a),
        Command::Compare(a) => compare::compare(a),
        Command::Trace(TraceCommand::Generate(a)) => trace_generate(a),
        Command::Trace(TraceCommand::Replay(a)) => trace_replay(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("invalid: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

pub(crate) fn load_scenario(path: &Path, seed: Option<u64>, rounds: Option<usize>) -> Result<Scenario, Failure> {
    let mut s = Scenario::load(path).with_context(|| format!("scenario {}", path.display())).invalid()?;
    if let Some(seed) = seed {
        s = s.with_seed(seed);
    }
    if let Some(r) = rounds {
        if r == 0 {
            return Err(Failure::Invalid(anyhow::anyhow!("--rounds must be >= 1")));
        }
        s = s.with_rounds(r);
    }
    Ok(s)
}

fn validate(config: &Path) -> Result<(), Failure> {
    let s = load_scenario(config, None, None)?;
    // Engine construction runs the remaining cross-module checks.
    meshfl_core::build_engine(&s, &Policy::ShortestPath).invalid()?;
    let net = Network::new(&s.topology);
    println!(
        "{}: ok ({} nodes, {} links, {} directed links, channel model {}, {} trace files)",
        config.display(),
        s.topology.nodes.len(),
        s.topology.links.len(),
        net.links().len(),
        s.topology.channel_model.name,
        s.traces.len()
    );
    Ok(())
}

pub(crate) fn resolve_policy(name: &str) -> Result<Policy, Failure> {
    match name.parse::<PolicyName>().invalid()? {
        PolicyName::ShortestPath => Ok(Policy::ShortestPath),
        PolicyName::MarlOnline => Ok(Policy::MarlOnline),
        PolicyName::MarlFrozen(path) => {
            let raw = std::fs::read_to_string(&path).with_context(|| format!("snapshot {path}")).invalid()?;
            let snap = QSnapshot::from_json(&raw).with_context(|| format!("snapshot {path}")).invalid()?;
            Ok(Policy::MarlFrozen(snap))
        }
    }
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let scenario = load_scenario(&a.config, a.seed, a.rounds)?;
    let policy = resolve_policy(&a.policy)?;
    // Snapshot/topology mismatches surface while building the engine.
    meshfl_core::build_engine(&scenario, &policy).invalid()?;
    let out = run_experiment(&scenario, &policy).runtime()?;
    artifacts::write_run(&a.out, &scenario, &out, "run").runtime()?;
    println!(
        "{}: {} rounds, final loss {:.6}, sim time {:.3} s, q updates {}",
        out.policy,
        out.rounds.len(),
        out.rounds.last().map_or(f64::NAN, |r| r.loss),
        out.rounds.last().map_or(0.0, |r| r.sim_time_s),
        out.q_counters.updates
    );
    Ok(())
}

fn trace_generate(a: TraceGenArgs) -> Result<(), Failure> {
    let scenario = load_scenario(&a.config, a.seed, None)?;
    if !(a.horizon > 0.0) {
        return Err(Failure::Invalid(anyhow::anyhow!("--horizon must be > 0")));
    }
    std::fs::create_dir_all(&a.out).with_context(|| format!("create {}", a.out.display())).runtime()?;
    let mut sink = DirTraceSink::new(&a.out);
    let timeline = scheduler_timeline(&scenario, a.horizon, Some(&mut sink)).runtime()?;
    let files = sink.finish().runtime()?;
    let net = Network::new(&scenario.topology);
    let states = a.out.join("link_states.csv");
    std::fs::write(&states, timeline.to_csv(&net)).with_context(|| format!("write {}", states.display())).runtime()?;
    println!("wrote {} trace files with {} rows each to {}", files.len(), timeline.ticks.len(), a.out.display());
    Ok(())
}

fn trace_replay(a: TraceReplayArgs) -> Result<(), Failure> {
    let scenario = load_scenario(&a.config, a.seed, a.rounds)?
        .with_trace_dir(&a.traces)
        .with_context(|| format!("traces in {}", a.traces.display()))
        .invalid()?;
    let policy = resolve_policy(&a.policy)?;
    let horizon = a
        .horizon
        .unwrap_or_else(|| scenario.traces.values().map(|t| t.duration_s()).fold(0.0, f64::max))
        .max(f64::MIN_POSITIVE);
    let timeline = scheduler_timeline(&scenario, horizon, None).runtime()?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("create {}", a.out.display())).runtime()?;
    let net = Network::new(&scenario.topology);
    std::fs::write(a.out.join("link_states.csv"), timeline.to_csv(&net)).runtime()?;
    let out = run_experiment(&scenario, &policy).runtime()?;
    artifacts::write_run(&a.out, &scenario, &out, "trace replay").runtime()?;
    println!("replayed {} traces; {} rounds under {}", scenario.traces.len(), out.rounds.len(), out.policy);
    Ok(())
}
