//! Synchronous federated learning over the simulated network.
//!
//! Workers minimise quadratic local losses `F_k(w) = 0.5 |w - c_k|^2` with
//! local SGD, ship their models to the aggregator as network flows, and
//! receive the FedAvg result back as unicast downloads.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::{Engine, LogRecord, NetsimError, Notification};
use crate::rng::{SeedStreams, SimRng};
use crate::topology::{Network, Role};

pub const ROUNDS_HEADER: &str = "round,loss,sim_time_s,slowest_worker,upload_max_s,download_max_s";

#[derive(Debug, Error)]
pub enum FlError {
    #[error("model dimensions differ: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("no models to aggregate")]
    NoModels,
    #[error("aggregation weights must be positive and finite")]
    BadWeights,
    #[error("invalid FL config: {0}")]
    BadConfig(String),
    #[error("round {round} aborted: flow {flow} from {src} to {dst} failed")]
    FlowFailed { round: usize, flow: usize, src: String, dst: String },
    #[error("round {0} stalled: the network went idle with transfers outstanding")]
    Stalled(usize),
    #[error(transparent)]
    Net(#[from] NetsimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Uniform,
    Weighted,
}

/// Per-round local computation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum ComputeTime {
    Constant { seconds: f64 },
    /// Truncated at zero.
    Gaussian { mean_s: f64, std_s: f64 },
    PerWorker { seconds: BTreeMap<String, f64> },
}

impl Default for ComputeTime {
    fn default() -> Self {
        ComputeTime::Constant { seconds: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlConfig {
    pub rounds: usize,
    pub local_iters: usize,
    pub learning_rate: f64,
    pub model_size_bytes: u64,
    pub aggregation: Aggregation,
    pub batch_noise_sigma: f64,
    pub dim: usize,
    /// Objective centers by worker id; drawn from N(0, I) when absent.
    pub centers: Option<BTreeMap<String, Vec<f64>>>,
    /// Sample counts for weighted FedAvg; 1 for unlisted workers.
    pub weights: BTreeMap<String, f64>,
    /// Initial global model; zeros when absent.
    pub initial_model: Option<Vec<f64>>,
    pub compute_time: ComputeTime,
}

impl Default for FlConfig {
    fn default() -> Self {
        FlConfig {
            rounds: 50,
            local_iters: 10,
            learning_rate: 0.1,
            model_size_bytes: 5_800_000,
            aggregation: Aggregation::Uniform,
            batch_noise_sigma: 0.0,
            dim: 10,
            centers: None,
            weights: BTreeMap::new(),
            initial_model: None,
            compute_time: ComputeTime::default(),
        }
    }
}

impl FlConfig {
    pub fn validate(&self) -> Result<(), FlError> {
        let bad = |m: String| Err(FlError::BadConfig(m));
        if self.rounds == 0 {
            return bad("rounds must be >= 1".into());
        }
        if self.local_iters == 0 {
            return bad("local_iters must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be > 0".into());
        }
        if self.model_size_bytes == 0 {
            return bad("model_size_bytes must be > 0".into());
        }
        if !(self.batch_noise_sigma >= 0.0) {
            return bad("batch_noise_sigma must be >= 0".into());
        }
        if self.dim == 0 {
            return bad("dim must be >= 1".into());
        }
        if let Some(w0) = &self.initial_model {
            if w0.len() != self.dim || w0.iter().any(|x| !x.is_finite()) {
                return bad(format!("initial_model must hold {} finite values", self.dim));
            }
        }
        if let Some(centers) = &self.centers {
            for (k, c) in centers {
                if c.len() != self.dim || c.iter().any(|x| !x.is_finite()) {
                    return bad(format!("center of {k} must hold {} finite values", self.dim));
                }
            }
        }
        if self.weights.values().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return bad("weights must be positive".into());
        }
        match &self.compute_time {
            ComputeTime::Constant { seconds } if !(*seconds >= 0.0) => bad("compute time must be >= 0".into()),
            ComputeTime::Gaussian { mean_s, std_s } if !(*mean_s >= 0.0 && *std_s >= 0.0) => {
                bad("gaussian compute time needs mean_s >= 0 and std_s >= 0".into())
            }
            ComputeTime::PerWorker { seconds } if seconds.values().any(|s| !(*s >= 0.0)) => {
                bad("compute times must be >= 0".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerObjective {
    pub worker: String,
    pub center: Vec<f64>,
    pub weight: f64,
}

impl WorkerObjective {
    pub fn loss(&self, w: &[f64]) -> f64 {
        0.5 * w.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>()
    }
}

/// Average of the local losses.
pub fn global_loss(objectives: &[WorkerObjective], w: &[f64]) -> f64 {
    objectives.iter().map(|o| o.loss(w)).sum::<f64>() / objectives.len() as f64
}

/// `h` steps of `w <- w - eta * ((w - c) + xi)` with `xi ~ N(0, sigma^2 I)`.
pub fn local_sgd<R: Rng + ?Sized>(
    obj: &WorkerObjective,
    w_in: &[f64],
    h: usize,
    eta: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<f64>, FlError> {
    if w_in.len() != obj.center.len() {
        return Err(FlError::DimMismatch { expected: obj.center.len(), got: w_in.len() });
    }
    if eta >= 2.0 {
        log::warn!("learning rate {eta} >= 2 diverges on quadratic objectives");
    }
    let noise = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma validated"));
    let mut w = w_in.to_vec();
    for _ in 0..h {
        for (x, c) in w.iter_mut().zip(&obj.center) {
            let xi = noise.as_ref().map_or(0.0, |n| n.sample(rng));
            *x -= eta * ((*x - c) + xi);
        }
    }
    Ok(w)
}

pub fn fedavg(models: &[(Vec<f64>, f64)], mode: Aggregation) -> Result<Vec<f64>, FlError> {
    let (first, _) = models.first().ok_or(FlError::NoModels)?;
    let d = first.len();
    if let Some((w, _)) = models.iter().find(|(w, _)| w.len() != d) {
        return Err(FlError::DimMismatch { expected: d, got: w.len() });
    }
    let weight = |m: f64| match mode {
        Aggregation::Uniform => 1.0,
        Aggregation::Weighted => m,
    };
    let total: f64 = models.iter().map(|(_, m)| weight(*m)).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(FlError::BadWeights);
    }
    let mut out = vec![0.0; d];
    for (w, m) in models {
        let m = weight(*m);
        for (o, x) in out.iter_mut().zip(w) {
            *o += m * x;
        }
    }
    out.iter_mut().for_each(|o| *o /= total);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlRoundLog {
    /// 1-based.
    pub round: usize,
    pub loss: f64,
    pub sim_time_s: f64,
    pub upload_delays_s: BTreeMap<String, f64>,
    pub download_delays_s: BTreeMap<String, f64>,
    pub slowest_worker: String,
    pub model: Vec<f64>,
}

impl FlRoundLog {
    pub fn upload_max_s(&self) -> f64 {
        self.upload_delays_s.values().copied().fold(0.0, f64::max)
    }

    pub fn download_max_s(&self) -> f64 {
        self.download_delays_s.values().copied().fold(0.0, f64::max)
    }
}

pub fn rounds_csv(logs: &[FlRoundLog]) -> String {
    let mut out = String::from(ROUNDS_HEADER);
    out.push('\n');
    for r in logs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.round,
            r.loss,
            r.sim_time_s,
            r.slowest_worker,
            r.upload_max_s(),
            r.download_max_s()
        );
    }
    out
}

/// Mean of `sim_time` differences over 1-based rounds `first..=last`.
pub fn mean_round_time(logs: &[FlRoundLog], first: usize, last: usize) -> Option<f64> {
    let times: Vec<f64> = round_durations(logs);
    let slice = times.get(first.checked_sub(1)?..last.min(times.len()))?;
    (!slice.is_empty()).then(|| slice.iter().sum::<f64>() / slice.len() as f64)
}

/// Duration of each round; the first round starts at time 0.
pub fn round_durations(logs: &[FlRoundLog]) -> Vec<f64> {
    let mut prev = 0.0;
    logs.iter()
        .map(|r| {
            let d = r.sim_time_s - prev;
            prev = r.sim_time_s;
            d
        })
        .collect()
}

/// FL participants and objectives resolved against the network.
#[derive(Debug, Clone)]
pub struct FlState {
    pub aggregator: usize,
    pub workers: Vec<usize>,
    pub objectives: Vec<WorkerObjective>,
    pub model: Vec<f64>,
    worker_rngs: Vec<SimRng>,
    compute_rng: SimRng,
}

impl FlState {
    pub fn new(net: &Network, cfg: &FlConfig, streams: &SeedStreams) -> Result<Self, FlError> {
        cfg.validate()?;
        let of_role = |r: Role| (0..net.node_count()).filter(move |&n| net.role(n) == r);
        let aggs: Vec<usize> = of_role(Role::Aggregator).collect();
        let [aggregator] = aggs[..] else {
            return Err(FlError::BadConfig(format!("expected exactly one aggregator, found {}", aggs.len())));
        };
        let mut workers: Vec<usize> = of_role(Role::Worker).collect();
        workers.sort_by(|a, b| net.name(*a).cmp(net.name(*b)));
        if workers.is_empty() {
            return Err(FlError::BadConfig("no worker nodes".into()));
        }
        let mut center_rng = streams.stream("fl/centers");
        let mut objectives = Vec::with_capacity(workers.len());
        for &w in &workers {
            let name = net.name(w).to_string();
            let center = match cfg.centers.as_ref().and_then(|c| c.get(&name)) {
                Some(c) => c.clone(),
                None => {
                    if cfg.centers.is_some() {
                        return Err(FlError::BadConfig(format!("no center given for worker {name}")));
                    }
                    let n = Normal::new(0.0, 1.0).expect("unit normal");
                    (0..cfg.dim).map(|_| n.sample(&mut center_rng)).collect()
                }
            };
            let weight = cfg.weights.get(&name).copied().unwrap_or(1.0);
            objectives.push(WorkerObjective { worker: name, center, weight });
        }
        if let ComputeTime::PerWorker { seconds } = &cfg.compute_time {
            if let Some(missing) = objectives.iter().find(|o| !seconds.contains_key(&o.worker)) {
                return Err(FlError::BadConfig(format!("no compute time given for worker {}", missing.worker)));
            }
        }
        let worker_rngs = workers.iter().map(|&w| streams.stream(&format!("worker/{}", net.name(w)))).collect();
        Ok(FlState {
            aggregator,
            workers,
            objectives,
            model: cfg.initial_model.clone().unwrap_or_else(|| vec![0.0; cfg.dim]),
            worker_rngs,
            compute_rng: streams.stream("fl/compute"),
        })
    }

    fn compute_time(&mut self, cfg: &FlConfig, k: usize) -> f64 {
        match &cfg.compute_time {
            ComputeTime::Constant { seconds } => *seconds,
            ComputeTime::Gaussian { mean_s, std_s } => {
                let n = Normal::new(*mean_s, *std_s).expect("validated");
                n.sample(&mut self.compute_rng).max(0.0)
            }
            ComputeTime::PerWorker { seconds } => seconds[&self.objectives[k].worker],
        }
    }

    pub fn loss(&self) -> f64 {
        global_loss(&self.objectives, &self.model)
    }
}

const TAG_UPLOAD: u64 = 1 << 32;
const TAG_DOWNLOAD: u64 = 2 << 32;

/// One synchronous round: local SGD, uploads, FedAvg, downloads.
/// `round` is 0-based; the returned log uses 1-based numbering.
pub fn run_round(engine: &mut Engine, cfg: &FlConfig, state: &mut FlState, round: usize) -> Result<FlRoundLog, FlError> {
    if let Some(q) = engine.q_router_mut() {
        q.set_round(round);
    }
    let t0 = engine.clock();
    let k_workers = state.workers.len();
    let mut local = Vec::with_capacity(k_workers);
    for k in 0..k_workers {
        let w = local_sgd(
            &state.objectives[k],
            &state.model,
            cfg.local_iters,
            cfg.learning_rate,
            cfg.batch_noise_sigma,
            &mut state.worker_rngs[k],
        )?;
        local.push((w, state.objectives[k].weight));
        let c = state.compute_time(cfg, k);
        engine.set_timer(t0 + c, k as u64)?;
    }

    let net_name = |e: &Engine, n: usize| e.net().name(n).to_string();
    let mut upload_start = vec![f64::NAN; k_workers];
    let mut upload = vec![f64::NAN; k_workers];
    let mut download = vec![f64::NAN; k_workers];
    let (mut uploads_done, mut downloads_done) = (0, 0);
    while downloads_done < k_workers {
        let Some(note) = engine.next_notification()? else {
            return Err(FlError::Stalled(round + 1));
        };
        match note {
            Notification::Timer { tag } => {
                let k = tag as usize;
                upload_start[k] = engine.clock();
                engine.start_flow(state.workers[k], state.aggregator, cfg.model_size_bytes, engine.clock(), true, TAG_UPLOAD | tag)?;
            }
            Notification::FlowComplete { flow, tag } => {
                let k = (tag & 0xffff_ffff) as usize;
                let delay = engine.end_to_end_delay(flow)?;
                if tag & TAG_UPLOAD != 0 {
                    upload[k] = delay;
                    uploads_done += 1;
                    if uploads_done == k_workers {
                        state.model = fedavg(&local, cfg.aggregation)?;
                        let now = engine.clock();
                        for (k, &w) in state.workers.iter().enumerate() {
                            engine.start_flow(state.aggregator, w, cfg.model_size_bytes, now, true, TAG_DOWNLOAD | k as u64)?;
                        }
                    }
                } else {
                    download[k] = delay;
                    downloads_done += 1;
                }
            }
            Notification::FlowFailed { flow, .. } => {
                let f = engine.flow(flow)?;
                return Err(FlError::FlowFailed {
                    round: round + 1,
                    flow,
                    src: net_name(engine, f.src),
                    dst: net_name(engine, f.dst),
                });
            }
        }
    }
    let slowest = (0..k_workers)
        .max_by(|&a, &b| (upload[a] + download[a]).total_cmp(&(upload[b] + download[b])).then(b.cmp(&a)))
        .expect("at least one worker");
    let log = FlRoundLog {
        round: round + 1,
        loss: state.loss(),
        sim_time_s: engine.clock(),
        upload_delays_s: (0..k_workers).map(|k| (state.objectives[k].worker.clone(), upload[k])).collect(),
        download_delays_s: (0..k_workers).map(|k| (state.objectives[k].worker.clone(), download[k])).collect(),
        slowest_worker: state.objectives[slowest].worker.clone(),
        model: state.model.clone(),
    };
    engine.push_log(LogRecord::RoundComplete {
        t: log.sim_time_s,
        round: log.round,
        loss: log.loss,
        slowest_worker: log.slowest_worker.clone(),
    });
    Ok(log)
}

/// Run `cfg.rounds` rounds back to back.
pub fn run_fl(engine: &mut Engine, cfg: &FlConfig, state: &mut FlState) -> Result<Vec<FlRoundLog>, FlError> {
    (0..cfg.rounds).map(|r| run_round(engine, cfg, state, r)).collect()
}
