//! Multi-agent tabular Q-routing.
//!
//! Each router owns a Q-table over states `(flow source, flow destination)`
//! and actions `next-hop neighbor`. Values estimate the negative remaining
//! delivery delay in seconds. Actions are drawn from a Boltzmann (softmax)
//! policy and learned on-policy: the upstream agent bootstraps from the value
//! of the action the downstream agent actually took.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::RoutingError;
use crate::rng::{SeedStreams, SimRng};
use crate::topology::Network;

/// Observed state of an incoming chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentState {
    pub src: usize,
    pub dst: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QEntry {
    pub q: f64,
    pub visits: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    #[default]
    Online,
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardGranularity {
    /// Every chunk hop produces a reward.
    #[default]
    Chunk,
    /// Only the last chunk of each flow produces rewards.
    Flow,
}

/// Piecewise-constant temperature by FL round: `[[first_round, tau], ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemperatureSchedule(pub Vec<(usize, f64)>);

impl TemperatureSchedule {
    pub fn constant(tau: f64) -> Self {
        TemperatureSchedule(vec![(0, tau)])
    }

    pub fn at_round(&self, round: usize) -> f64 {
        self.0
            .iter()
            .rev()
            .find(|(from, _)| *from <= round)
            .or(self.0.first())
            .map(|(_, tau)| *tau)
            .unwrap_or(1.0)
    }
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        TemperatureSchedule(vec![(0, 1.0), (10, 0.3)])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QRoutingConfig {
    #[serde(default)]
    pub mode: PolicyMode,
    #[serde(default)]
    pub temperature: TemperatureSchedule,
    #[serde(default = "default_alpha")]
    pub learning_rate: f64,
    #[serde(default = "default_gamma")]
    pub discount: f64,
    #[serde(default)]
    pub initial_q: f64,
    #[serde(default = "default_loop_penalty")]
    pub loop_penalty_s: f64,
    #[serde(default)]
    pub reward_granularity: RewardGranularity,
    /// Exploit greedily instead of sampling when frozen.
    #[serde(default)]
    pub greedy: bool,
}

fn default_alpha() -> f64 {
    0.1
}

fn default_gamma() -> f64 {
    1.0
}

fn default_loop_penalty() -> f64 {
    0.1
}

impl Default for QRoutingConfig {
    fn default() -> Self {
        QRoutingConfig {
            mode: PolicyMode::Online,
            temperature: TemperatureSchedule::default(),
            learning_rate: default_alpha(),
            discount: default_gamma(),
            initial_q: 0.0,
            loop_penalty_s: default_loop_penalty(),
            reward_granularity: RewardGranularity::Chunk,
            greedy: false,
        }
    }
}

impl QRoutingConfig {
    pub fn validate(&self) -> Result<(), RoutingError> {
        let bad = |what: String| Err(RoutingError::BadConfig(what));
        if self.temperature.0.is_empty() {
            return bad("temperature schedule is empty".into());
        }
        for (round, tau) in &self.temperature.0 {
            if !(*tau > 0.0) || !tau.is_finite() {
                return bad(format!("temperature {tau} at round {round} must be > 0"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate {} outside (0, 1]", self.learning_rate));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad(format!("discount {} outside (0, 1]", self.discount));
        }
        if !self.initial_q.is_finite() {
            return bad("initial_q must be finite".into());
        }
        if !(self.loop_penalty_s >= 0.0) {
            return bad("loop_penalty_s must be >= 0".into());
        }
        Ok(())
    }
}

/// Boltzmann probabilities `exp(q/tau) / sum exp(q/tau)`, computed with the
/// maximum subtracted first.
pub fn softmax_probabilities(values: &[f64], tau: f64) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = values.iter().map(|v| ((v - max) / tau).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Sample an action from the softmax policy.
pub fn softmax_select<K: Clone, R: Rng + ?Sized>(q: &[(K, f64)], tau: f64, rng: &mut R) -> Result<K, RoutingError> {
    if q.is_empty() {
        return Err(RoutingError::NoActions);
    }
    if !(tau > 0.0) {
        return Err(RoutingError::BadConfig(format!("temperature {tau} must be > 0")));
    }
    let values: Vec<f64> = q.iter().map(|(_, v)| *v).collect();
    let probs = softmax_probabilities(&values, tau);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(q[i].0.clone());
        }
    }
    Ok(q[q.len() - 1].0.clone())
}

/// First action with the highest value.
pub fn greedy_select<K: Clone>(q: &[(K, f64)]) -> Result<K, RoutingError> {
    let mut best: Option<&(K, f64)> = None;
    for entry in q {
        if best.map_or(true, |b| entry.1 > b.1) {
            best = Some(entry);
        }
    }
    best.map(|b| b.0.clone()).ok_or(RoutingError::NoActions)
}

/// On-policy (SARSA-style) update:
/// `Q <- (1 - alpha) Q + alpha (reward + gamma Q_next)`, with `Q_next = 0`
/// when the next node is the flow's destination.
pub fn q_update(q: f64, reward: f64, q_next: Option<f64>, alpha: f64, gamma: f64) -> f64 {
    (1.0 - alpha) * q + alpha * (reward + gamma * q_next.unwrap_or(0.0))
}

/// One agent's table. Actions per state are kept in neighbor-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub owner: usize,
    pub(crate) entries: BTreeMap<AgentState, Vec<(usize, QEntry)>>,
}

impl QTable {
    pub fn new(owner: usize) -> Self {
        QTable { owner, entries: BTreeMap::new() }
    }

    pub fn actions(&self, state: AgentState) -> Option<&[(usize, QEntry)]> {
        self.entries.get(&state).map(Vec::as_slice)
    }

    pub fn value(&self, state: AgentState, action: usize) -> Option<f64> {
        self.entries.get(&state)?.iter().find(|(a, _)| *a == action).map(|(_, e)| e.q)
    }

    pub fn states(&self) -> impl Iterator<Item = (&AgentState, &Vec<(usize, QEntry)>)> {
        self.entries.iter()
    }

    fn ensure(&mut self, net: &Network, state: AgentState, initial_q: f64) -> &mut Vec<(usize, QEntry)> {
        let owner = self.owner;
        self.entries.entry(state).or_insert_with(|| candidate_actions(net, owner, state.dst)
            .into_iter()
            .map(|n| (n, QEntry { q: initial_q, visits: 0 }))
            .collect())
    }

    /// Apply [`q_update`] to `(state, action)`.
    pub fn update(
        &mut self,
        state: AgentState,
        action: usize,
        reward: f64,
        q_next: Option<f64>,
        alpha: f64,
        gamma: f64,
    ) -> Result<f64, RoutingError> {
        let entry = self
            .entries
            .get_mut(&state)
            .and_then(|acts| acts.iter_mut().find(|(a, _)| *a == action))
            .map(|(_, e)| e)
            .ok_or(RoutingError::UnknownAction { action })?;
        entry.q = q_update(entry.q, reward, q_next, alpha, gamma);
        entry.visits += 1;
        Ok(entry.q)
    }
}

/// Neighbors that may carry traffic for `dst`: routers, plus `dst` itself.
pub fn candidate_actions(net: &Network, node: usize, dst: usize) -> Vec<usize> {
    net.neighbors(node).into_iter().filter(|&n| net.can_relay_to(n, dst)).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct QCounters {
    /// Reward events delivered to an agent.
    pub reward_events: u64,
    /// Updates applied to a table.
    pub updates: u64,
    /// Updates skipped because the policy is frozen.
    pub skipped: u64,
}

/// All agents of the mesh.
#[derive(Debug, Clone)]
pub struct QRouter {
    cfg: QRoutingConfig,
    tables: Vec<Option<QTable>>,
    rngs: Vec<Option<SimRng>>,
    round: usize,
    counters: QCounters,
}

impl QRouter {
    pub fn new(net: &Network, cfg: QRoutingConfig, streams: &SeedStreams) -> Self {
        let tables = (0..net.node_count())
            .map(|n| net.is_router(n).then(|| QTable::new(n)))
            .collect();
        Self::with_tables(net, cfg, streams, tables)
    }

    pub(crate) fn with_tables(
        net: &Network,
        cfg: QRoutingConfig,
        streams: &SeedStreams,
        tables: Vec<Option<QTable>>,
    ) -> Self {
        let rngs = (0..net.node_count())
            .map(|n| net.is_router(n).then(|| streams.stream(&format!("agent/{}", net.name(n)))))
            .collect();
        QRouter { cfg, tables, rngs, round: 0, counters: QCounters::default() }
    }

    pub fn config(&self) -> &QRoutingConfig {
        &self.cfg
    }

    pub fn set_mode(&mut self, mode: PolicyMode) {
        self.cfg.mode = mode;
    }

    pub fn mode(&self) -> PolicyMode {
        self.cfg.mode
    }

    pub fn set_round(&mut self, round: usize) {
        self.round = round;
    }

    pub fn temperature(&self) -> f64 {
        self.cfg.temperature.at_round(self.round)
    }

    pub fn counters(&self) -> QCounters {
        self.counters
    }

    pub fn is_agent(&self, node: usize) -> bool {
        self.tables.get(node).is_some_and(Option::is_some)
    }

    pub fn table(&self, node: usize) -> Option<&QTable> {
        self.tables.get(node)?.as_ref()
    }

    pub fn tables(&self) -> impl Iterator<Item = &QTable> {
        self.tables.iter().flatten()
    }

    /// Current value of `(state, action)` at `node`, or `initial_q` when the
    /// agent has not seen the state yet.
    pub fn q_value(&self, node: usize, state: AgentState, action: usize) -> f64 {
        self.table(node).and_then(|t| t.value(state, action)).unwrap_or(self.cfg.initial_q)
    }

    /// Choose the next hop for a chunk in `state` at router `node` among
    /// neighbors whose link is up. Returns `None` when no action is live.
    pub fn select(&mut self, net: &Network, up: &[bool], node: usize, state: AgentState) -> Option<usize> {
        let live = |n: usize| net.links_between(node, n).any(|l| up[l]);
        let initial_q = self.cfg.initial_q;
        let frozen = self.cfg.mode == PolicyMode::Frozen;
        let table = self.tables[node].as_mut()?;
        let choices: Vec<(usize, f64)> = if frozen {
            // A frozen table is never extended; unseen states use initial_q.
            match table.actions(state) {
                Some(acts) => acts.iter().filter(|(n, _)| live(*n)).map(|(n, e)| (*n, e.q)).collect(),
                None => candidate_actions(net, node, state.dst).into_iter().filter(|&n| live(n)).map(|n| (n, initial_q)).collect(),
            }
        } else {
            table.ensure(net, state, initial_q).iter().filter(|(n, _)| live(*n)).map(|(n, e)| (*n, e.q)).collect()
        };
        if choices.is_empty() {
            return None;
        }
        if frozen && self.cfg.greedy {
            return greedy_select(&choices).ok();
        }
        let tau = self.cfg.temperature.at_round(self.round);
        let rng = self.rngs[node].as_mut().expect("agent rng");
        softmax_select(&choices, tau, rng).ok()
    }

    /// Deliver the reward for `node` having forwarded a `state` chunk via
    /// `action` with the given per-hop delay. `q_next` is the downstream
    /// agent's value for the action it took, `None` at the destination.
    pub fn on_reward(
        &mut self,
        node: usize,
        state: AgentState,
        action: usize,
        per_hop_delay_s: f64,
        penalty_s: f64,
        q_next: Option<f64>,
    ) -> Result<(), RoutingError> {
        self.counters.reward_events += 1;
        if self.cfg.mode == PolicyMode::Frozen {
            self.counters.skipped += 1;
            return Ok(());
        }
        let reward = -per_hop_delay_s - penalty_s;
        let (alpha, gamma) = (self.cfg.learning_rate, self.cfg.discount);
        let table = self.tables[node].as_mut().ok_or(RoutingError::NotAnAgent(node))?;
        table.update(state, action, reward, q_next, alpha, gamma)?;
        self.counters.updates += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn softmax_two_actions() {
        let p = softmax_probabilities(&[-1.0, -2.0], 1.0);
        assert_abs_diff_eq!(p[0], 0.7311, epsilon = 1e-4);
        // e^-1 / (e^-1 + e^-2)
        let oracle = (-1f64).exp() / ((-1f64).exp() + (-2f64).exp());
        assert_abs_diff_eq!(p[0], oracle, epsilon = 1e-15);
    }

    #[test]
    fn softmax_single_and_empty() {
        let mut rng = SeedStreams::new(0).stream("t");
        assert_eq!(softmax_select(&[("B", -3.0)], 0.5, &mut rng).unwrap(), "B");
        let empty: [(&str, f64); 0] = [];
        assert!(matches!(softmax_select(&empty, 1.0, &mut rng), Err(RoutingError::NoActions)));
    }

    #[test]
    fn softmax_survives_large_magnitudes() {
        let p = softmax_probabilities(&[-1e6, -1e6 - 1.0], 1.0);
        assert!(p.iter().all(|x| x.is_finite()));
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sarsa_examples() {
        assert_abs_diff_eq!(q_update(-2.0, -0.5, Some(-1.0), 0.5, 1.0), -1.75, epsilon = 1e-15);
        assert_abs_diff_eq!(q_update(0.0, -0.3, None, 1.0, 1.0), -0.3, epsilon = 1e-15);
        assert_eq!(q_update(-0.7, -5.0, Some(-3.0), 0.0, 1.0), -0.7);
    }

    #[test]
    fn schedule_lookup() {
        let s = TemperatureSchedule(vec![(0, 1.0), (10, 0.3)]);
        assert_eq!(s.at_round(0), 1.0);
        assert_eq!(s.at_round(9), 1.0);
        assert_eq!(s.at_round(10), 0.3);
        assert_eq!(s.at_round(500), 0.3);
    }

    #[test]
    fn greedy_picks_first_max() {
        assert_eq!(greedy_select(&[("a", -2.0), ("b", -1.0), ("c", -1.0)]).unwrap(), "b");
    }
}
