use std::collections::{HashMap, VecDeque};

use rand::Rng;
use serde::Serialize;

use super::event::{EventKind, EventQueue};
use super::telemetry::{DelaySample, DropReason, LogRecord};
use super::{tx_delay_s, NetsimConfig, NetsimError};
use crate::rng::{SeedStreams, SimRng};
use crate::routing::{AgentState, QRouter, RewardGranularity, RoutingError, ShortestPath};
use crate::scheduler::{LinkScheduler, SchedulerWarning, Tick};
use crate::topology::{LinkKind, Network};

/// Routing policy driving forwarding decisions.
#[derive(Debug, Clone)]
pub enum RoutingMode {
    /// Minimum-hop paths, cached in per-node flow tables between ticks.
    ShortestPath,
    /// Per-router Q-learning agents; shortest path only as a loop fallback.
    QRouting(Box<QRouter>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopRecord {
    pub node: usize,
    pub next: usize,
    pub link: usize,
    pub enqueue: f64,
    pub dequeue: f64,
    pub tx_delay: f64,
    pub prop_delay: f64,
}

impl HopRecord {
    /// Queueing plus transmission plus propagation.
    pub fn delay(&self) -> f64 {
        (self.dequeue - self.enqueue) + self.tx_delay + self.prop_delay
    }
}

#[derive(Debug, Clone, PartialEq)]
struct PendingReward {
    node: usize,
    action: usize,
    penalty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub flow: usize,
    pub index: u32,
    pub size_bytes: u32,
    pub src: usize,
    pub dst: usize,
    pub injected_at: f64,
    pub hops: Vec<HopRecord>,
    pending: Option<PendingReward>,
}

impl Chunk {
    pub fn hop_delay_sum(&self) -> f64 {
        self.hops.iter().map(HopRecord::delay).sum()
    }

    fn visited(&self, node: usize) -> bool {
        self.hops.iter().any(|h| h.node == node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    Pending,
    Active,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowInfo {
    pub id: usize,
    pub src: usize,
    pub dst: usize,
    pub size_bytes: u64,
    pub chunk_count: u32,
    pub start: f64,
    pub end: Option<f64>,
    pub status: FlowStatus,
    pub reliable: bool,
    pub tag: u64,
    pub retransmissions: u64,
    /// Injection time and hop-delay sum of the chunk whose delivery
    /// completed the flow.
    pub last_chunk: Option<(f64, f64)>,
    next_index: u32,
    outstanding: u32,
    delivered: u32,
    delivered_mask: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Notification {
    FlowComplete { flow: usize, tag: u64 },
    FlowFailed { flow: usize, tag: u64 },
    Timer { tag: u64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NetStats {
    pub injected: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub dropped_overflow: u64,
    pub dropped_loss: u64,
    pub dropped_no_route: u64,
    pub dropped_ttl: u64,
    pub retransmissions: u64,
    pub hops: u64,
    pub routing_queries: u64,
    pub table_hits: u64,
    pub loop_fallbacks: u64,
    pub ticks: u64,
}

#[derive(Debug, Clone)]
struct InTx {
    chunk: Box<Chunk>,
    enqueue: f64,
    dequeue: f64,
    tx: f64,
}

#[derive(Debug, Clone)]
struct LinkRt {
    fifo: VecDeque<(Box<Chunk>, f64)>,
    in_tx: Option<InTx>,
    rate_mbps: f64,
    loss: f64,
    prop_s: f64,
    /// Host attachment: infinite rate, no loss, no queue.
    ideal: bool,
    radio: Option<usize>,
}

/// Single-threaded discrete-event engine owning all mutable network state.
#[derive(Debug)]
pub struct Engine {
    net: Network,
    cfg: NetsimConfig,
    scheduler: LinkScheduler,
    routing: RoutingMode,
    sp: ShortestPath,
    clock: f64,
    queue: EventQueue,
    links: Vec<LinkRt>,
    up: Vec<bool>,
    loss_rngs: Vec<SimRng>,
    activity: Vec<bool>,
    tick_index: u64,
    flows: Vec<FlowInfo>,
    flow_table: Vec<HashMap<(usize, usize), usize>>,
    in_network: u64,
    /// Timers and flow completions still in the event queue.
    pending_notices: usize,
    stats: NetStats,
    log: Vec<LogRecord>,
    delays: Vec<DelaySample>,
    notifications: VecDeque<Notification>,
    timeline: Option<Vec<Tick>>,
}

impl Engine {
    pub fn new(
        net: Network,
        cfg: NetsimConfig,
        scheduler: LinkScheduler,
        routing: RoutingMode,
        streams: &SeedStreams,
    ) -> Result<Self, NetsimError> {
        cfg.validate()?;
        let links: Vec<LinkRt> = net
            .links()
            .iter()
            .map(|l| {
                let prop_s = cfg
                    .link_propagation_delay_s
                    .get(&net.link_label(l.id))
                    .copied()
                    .unwrap_or(cfg.propagation_delay_s);
                let (ideal, radio) = match l.kind {
                    LinkKind::Radio { link, .. } => (false, Some(link)),
                    LinkKind::Attachment => (true, None),
                };
                LinkRt { fifo: VecDeque::new(), in_tx: None, rate_mbps: 0.0, loss: 0.0, prop_s, ideal, radio }
            })
            .collect();
        let up = links.iter().map(|l| l.ideal).collect();
        let loss_rngs = net.links().iter().map(|l| streams.stream(&format!("loss/{}", net.link_label(l.id)))).collect();
        let mut queue = EventQueue::new();
        queue.push(0.0, EventKind::SchedulerTick);
        Ok(Engine {
            flow_table: vec![HashMap::new(); net.node_count()],
            activity: vec![false; net.radio_link_count()],
            net,
            cfg,
            scheduler,
            routing,
            sp: ShortestPath::new(),
            clock: 0.0,
            queue,
            links,
            up,
            loss_rngs,
            tick_index: 0,
            flows: Vec::new(),
            in_network: 0,
            pending_notices: 0,
            stats: NetStats::default(),
            log: Vec::new(),
            delays: Vec::new(),
            notifications: VecDeque::new(),
            timeline: None,
        })
    }

    /// Keep every scheduler tick for later inspection.
    pub fn record_timeline(&mut self) {
        self.timeline.get_or_insert_with(Vec::new);
    }

    pub fn timeline(&self) -> Option<&[Tick]> {
        self.timeline.as_deref()
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn net(&self) -> &Network {
        &self.net
    }

    pub fn config(&self) -> &NetsimConfig {
        &self.cfg
    }

    pub fn stats(&self) -> NetStats {
        self.stats
    }

    pub fn flows(&self) -> &[FlowInfo] {
        &self.flows
    }

    pub fn flow(&self, id: usize) -> Result<&FlowInfo, NetsimError> {
        self.flows.get(id).ok_or(NetsimError::UnknownFlow(id))
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn push_log(&mut self, rec: LogRecord) {
        self.log.push(rec);
    }

    pub fn delays(&self) -> &[DelaySample] {
        &self.delays
    }

    pub fn routing(&self) -> &RoutingMode {
        &self.routing
    }

    pub fn q_router(&self) -> Option<&QRouter> {
        match &self.routing {
            RoutingMode::QRouting(q) => Some(q),
            RoutingMode::ShortestPath => None,
        }
    }

    pub fn q_router_mut(&mut self) -> Option<&mut QRouter> {
        match &mut self.routing {
            RoutingMode::QRouting(q) => Some(q),
            RoutingMode::ShortestPath => None,
        }
    }

    /// Directed links currently able to carry traffic.
    pub fn link_up(&self) -> &[bool] {
        &self.up
    }

    pub fn link_rate_mbps(&self, link: usize) -> f64 {
        if self.links[link].ideal {
            f64::INFINITY
        } else {
            self.links[link].rate_mbps
        }
    }

    /// Chunks injected and neither delivered nor dropped.
    pub fn in_network(&self) -> u64 {
        self.in_network
    }

    /// Count chunks physically present in queues, transmitters and pending
    /// hop arrivals. Should always equal [`Engine::in_network`].
    pub fn scan_chunks_in_network(&self) -> u64 {
        let held: usize = self.links.iter().map(|l| l.fifo.len() + usize::from(l.in_tx.is_some())).sum();
        let travelling = self
            .queue
            .iter()
            .filter(|e| matches!(&e.kind, EventKind::ChunkArrival { chunk, .. } if !chunk.hops.is_empty()))
            .count();
        (held + travelling) as u64
    }

    /// Register a flow that starts at time `t`.
    pub fn start_flow(&mut self, src: usize, dst: usize, size_bytes: u64, t: f64, reliable: bool, tag: u64) -> Result<usize, NetsimError> {
        let n = self.net.node_count();
        if src >= n {
            return Err(NetsimError::UnknownNode(src));
        }
        if dst >= n {
            return Err(NetsimError::UnknownNode(dst));
        }
        if src == dst {
            return Err(NetsimError::SelfFlow(self.net.name(src).to_string()));
        }
        if size_bytes == 0 {
            return Err(NetsimError::EmptyFlow);
        }
        if t < self.clock {
            return Err(NetsimError::TimeTravel { t, clock: self.clock });
        }
        let chunks = self.cfg.chunk_count(size_bytes);
        let chunk_count = u32::try_from(chunks).map_err(|_| NetsimError::BadConfig(format!("flow of {size_bytes} bytes has too many chunks")))?;
        let id = self.flows.len();
        self.flows.push(FlowInfo {
            id,
            src,
            dst,
            size_bytes,
            chunk_count,
            start: t,
            end: None,
            status: FlowStatus::Pending,
            reliable,
            tag,
            retransmissions: 0,
            last_chunk: None,
            next_index: 0,
            outstanding: 0,
            delivered: 0,
            delivered_mask: vec![false; chunk_count as usize],
        });
        self.queue.push(t, EventKind::FlowStart { flow: id });
        Ok(id)
    }

    pub fn set_timer(&mut self, t: f64, tag: u64) -> Result<(), NetsimError> {
        if t < self.clock {
            return Err(NetsimError::TimeTravel { t, clock: self.clock });
        }
        self.pending_notices += 1;
        self.queue.push(t, EventKind::RoundTimer { tag });
        Ok(())
    }

    /// Completion time minus start time of a finished flow.
    pub fn end_to_end_delay(&self, flow: usize) -> Result<f64, NetsimError> {
        let f = self.flow(flow)?;
        match (f.status, f.end) {
            (FlowStatus::Complete, Some(end)) => Ok(end - f.start),
            _ => Err(NetsimError::Incomplete(flow)),
        }
    }

    /// Process every event with time `<= t_end`, then advance the clock.
    pub fn run_until(&mut self, t_end: f64) -> Result<&[LogRecord], NetsimError> {
        if t_end < self.clock {
            return Err(NetsimError::TimeTravel { t: t_end, clock: self.clock });
        }
        while self.queue.peek_time().is_some_and(|t| t <= t_end) {
            self.step()?;
        }
        self.clock = t_end;
        Ok(&self.log)
    }

    fn has_work(&self) -> bool {
        self.pending_notices > 0
            || self.flows.iter().any(|f| matches!(f.status, FlowStatus::Pending | FlowStatus::Active))
    }

    /// Run until the next flow completion, flow failure or timer.
    /// Returns `None` once no flows or timers remain.
    pub fn next_notification(&mut self) -> Result<Option<Notification>, NetsimError> {
        loop {
            if let Some(n) = self.notifications.pop_front() {
                return Ok(Some(n));
            }
            if !self.has_work() {
                return Ok(None);
            }
            if self.clock > self.cfg.max_sim_time_s {
                return Err(NetsimError::SimTimeExceeded(self.cfg.max_sim_time_s));
            }
            if !self.step()? {
                return Ok(None);
            }
        }
    }

    /// Process one event. Returns false when the queue is empty.
    pub fn step(&mut self) -> Result<bool, NetsimError> {
        let Some(ev) = self.queue.pop() else { return Ok(false) };
        debug_assert!(ev.time >= self.clock, "event at {} before clock {}", ev.time, self.clock);
        self.clock = ev.time;
        match ev.kind {
            EventKind::SchedulerTick => self.on_tick()?,
            EventKind::FlowStart { flow } => {
                let f = &mut self.flows[flow];
                f.status = FlowStatus::Active;
                let rec = LogRecord::FlowStart {
                    t: self.clock,
                    flow,
                    src: self.net.name(f.src).to_string(),
                    dst: self.net.name(f.dst).to_string(),
                    bytes: f.size_bytes,
                    chunks: f.chunk_count as u64,
                };
                self.log.push(rec);
                self.fill_window(flow)?;
            }
            EventKind::ChunkArrival { node, chunk } => {
                if chunk.hops.is_empty() {
                    // Retransmission re-entering at its source.
                    self.inject(*chunk)?;
                } else {
                    self.on_arrival(node, chunk)?;
                }
            }
            EventKind::ChunkTxComplete { link } => self.on_tx_complete(link)?,
            EventKind::FlowComplete { flow } => {
                self.pending_notices -= 1;
                let f = &self.flows[flow];
                let rec = LogRecord::FlowComplete {
                    t: self.clock,
                    flow,
                    src: self.net.name(f.src).to_string(),
                    dst: self.net.name(f.dst).to_string(),
                    duration_s: self.clock - f.start,
                    retransmissions: f.retransmissions,
                };
                self.log.push(rec);
                self.notifications.push_back(Notification::FlowComplete { flow, tag: f.tag });
            }
            EventKind::RoundTimer { tag } => {
                self.pending_notices -= 1;
                self.log.push(LogRecord::RoundTimer { t: self.clock, tag });
                self.notifications.push_back(Notification::Timer { tag });
            }
        }
        Ok(true)
    }

    fn on_tick(&mut self) -> Result<(), NetsimError> {
        let tick = self.scheduler.schedule_tick(self.clock, &self.activity)?;
        for s in &tick.states {
            let l = &mut self.links[s.link];
            l.rate_mbps = s.effective_rate_mbps;
            l.loss = s.loss;
            self.up[s.link] = s.is_up();
        }
        for w in &tick.warnings {
            let SchedulerWarning::TraceExhausted { node, iface, t } = w;
            self.log.push(LogRecord::TraceExhausted { t: *t, node: node.clone(), iface: iface.clone() });
        }
        self.log.push(LogRecord::Tick {
            t: self.clock,
            links_up: self.up.iter().filter(|u| **u).count(),
            links_total: self.up.len(),
        });
        self.activity.iter_mut().for_each(|a| *a = false);
        self.flow_table.iter_mut().for_each(HashMap::clear);
        self.sp.invalidate();
        self.stats.ticks += 1;
        if let Some(tl) = self.timeline.as_mut() {
            tl.push(tick);
        }
        for l in 0..self.links.len() {
            self.try_start(l);
        }
        self.tick_index += 1;
        let next = self.tick_index as f64 * self.scheduler.period_s();
        self.queue.push(next, EventKind::SchedulerTick);
        Ok(())
    }

    fn fill_window(&mut self, flow: usize) -> Result<(), NetsimError> {
        let window = self.cfg.flow_window;
        loop {
            let f = &mut self.flows[flow];
            if f.status != FlowStatus::Active || f.next_index >= f.chunk_count || (window > 0 && f.outstanding >= window) {
                return Ok(());
            }
            let index = f.next_index;
            f.next_index += 1;
            f.outstanding += 1;
            let chunk_size = self.cfg.chunk_size_bytes as u64;
            let size = (f.size_bytes - index as u64 * chunk_size).min(chunk_size) as u32;
            let chunk = Chunk {
                flow,
                index,
                size_bytes: size,
                src: f.src,
                dst: f.dst,
                injected_at: self.clock,
                hops: Vec::new(),
                pending: None,
            };
            self.inject(chunk)?;
        }
    }

    fn inject(&mut self, mut chunk: Chunk) -> Result<(), NetsimError> {
        chunk.injected_at = self.clock;
        self.stats.injected += 1;
        self.in_network += 1;
        self.forward(chunk.src, Box::new(chunk))
    }

    fn on_arrival(&mut self, node: usize, mut chunk: Box<Chunk>) -> Result<(), NetsimError> {
        let hop = chunk.hops.last().expect("arrival after a hop").clone();
        self.stats.hops += 1;
        if self.cfg.record_delays && !self.links[hop.link].ideal {
            self.delays.push(DelaySample {
                t: self.clock,
                node: hop.node,
                next_hop: hop.next,
                flow_src: chunk.src,
                flow_dst: chunk.dst,
                delay_s: hop.delay(),
            });
        }
        if node != chunk.dst {
            return self.forward(node, chunk);
        }
        // Terminal hop: bootstrap value is zero.
        if let Some(p) = chunk.pending.take() {
            self.deliver_reward(&p, &chunk, hop.delay(), None)?;
        }
        self.stats.delivered += 1;
        self.in_network -= 1;
        let now = self.clock;
        let f = &mut self.flows[chunk.flow];
        if f.status != FlowStatus::Active || f.delivered_mask[chunk.index as usize] {
            return Ok(());
        }
        f.delivered_mask[chunk.index as usize] = true;
        f.delivered += 1;
        f.outstanding -= 1;
        if f.delivered == f.chunk_count {
            f.status = FlowStatus::Complete;
            f.end = Some(now);
            f.last_chunk = Some((chunk.injected_at, chunk.hop_delay_sum()));
            self.pending_notices += 1;
            self.queue.push(now, EventKind::FlowComplete { flow: chunk.flow });
            Ok(())
        } else {
            self.fill_window(chunk.flow)
        }
    }

    fn deliver_reward(&mut self, p: &PendingReward, chunk: &Chunk, delay: f64, q_next: Option<f64>) -> Result<(), NetsimError> {
        if let RoutingMode::QRouting(q) = &mut self.routing {
            let state = AgentState { src: chunk.src, dst: chunk.dst };
            q.on_reward(p.node, state, p.action, delay, p.penalty, q_next)?;
        }
        Ok(())
    }

    fn forward(&mut self, node: usize, mut chunk: Box<Chunk>) -> Result<(), NetsimError> {
        if chunk.hops.len() >= self.cfg.ttl as usize {
            self.drop_chunk(chunk, node, None, DropReason::TtlExpired);
            return Ok(());
        }
        let (src, dst) = (chunk.src, chunk.dst);
        let looped = chunk.visited(node);
        let decision: Result<usize, RoutingError> = match &mut self.routing {
            RoutingMode::ShortestPath => {
                let cached = self.flow_table[node].get(&(src, dst)).copied();
                match cached.filter(|&n| self.net.links_between(node, n).any(|l| self.up[l])) {
                    Some(n) => {
                        self.stats.table_hits += 1;
                        Ok(n)
                    }
                    None => {
                        self.stats.routing_queries += 1;
                        let r = self.sp.next_hop(&self.net, &self.up, node, dst);
                        if let Ok(n) = r {
                            self.flow_table[node].insert((src, dst), n);
                        }
                        r
                    }
                }
            }
            RoutingMode::QRouting(q) => {
                self.stats.routing_queries += 1;
                let state = AgentState { src, dst };
                let choice = if q.is_agent(node) && !looped { q.select(&self.net, &self.up, node, state) } else { None };
                match choice {
                    Some(n) => Ok(n),
                    None => {
                        if looped {
                            self.stats.loop_fallbacks += 1;
                        }
                        self.sp.next_hop(&self.net, &self.up, node, dst)
                    }
                }
            }
        };
        let next = match decision {
            Ok(n) => n,
            Err(RoutingError::NoRoute { .. }) => {
                self.drop_chunk(chunk, node, None, DropReason::NoRoute);
                return Ok(());
            }
            Err(e) => return Err(e.into()),
        };
        if let Some(p) = chunk.pending.take() {
            let delay = chunk.hops.last().map_or(0.0, HopRecord::delay);
            let q_next = self.q_router().map(|q| q.q_value(node, AgentState { src, dst }, next));
            self.deliver_reward(&p, &chunk, delay, q_next)?;
        }
        if let RoutingMode::QRouting(q) = &self.routing {
            let last = self.flows[chunk.flow].chunk_count - 1;
            let wants = match q.config().reward_granularity {
                RewardGranularity::Chunk => true,
                RewardGranularity::Flow => chunk.index == last,
            };
            if q.is_agent(node) && wants {
                let penalty = if chunk.visited(next) { q.config().loop_penalty_s } else { 0.0 };
                chunk.pending = Some(PendingReward { node, action: next, penalty });
            }
        }
        let link = self
            .net
            .links_between(node, next)
            .find(|&l| self.up[l])
            .expect("routing returns neighbors over up links");
        self.enqueue(link, chunk);
        Ok(())
    }

    fn enqueue(&mut self, link: usize, mut chunk: Box<Chunk>) {
        let now = self.clock;
        let l = &self.links[link];
        if l.ideal {
            let to = self.net.link(link).to;
            chunk.hops.push(HopRecord {
                node: self.net.link(link).from,
                next: to,
                link,
                enqueue: now,
                dequeue: now,
                tx_delay: 0.0,
                prop_delay: l.prop_s,
            });
            self.queue.push(now + l.prop_s, EventKind::ChunkArrival { node: to, chunk });
            return;
        }
        if l.fifo.len() >= self.cfg.queue_capacity {
            let (from, to) = (self.net.link(link).from, self.net.link(link).to);
            self.drop_chunk(chunk, from, Some(to), DropReason::QueueOverflow);
            return;
        }
        self.links[link].fifo.push_back((chunk, now));
        self.try_start(link);
    }

    fn try_start(&mut self, link: usize) {
        let now = self.clock;
        let l = &mut self.links[link];
        if l.ideal || l.in_tx.is_some() || !self.up[link] || !(l.rate_mbps > 0.0) {
            return;
        }
        let Some((chunk, enqueue)) = l.fifo.pop_front() else { return };
        let tx = tx_delay_s(chunk.size_bytes, l.rate_mbps);
        if let Some(r) = l.radio {
            self.activity[r] = true;
        }
        l.in_tx = Some(InTx { chunk, enqueue, dequeue: now, tx });
        self.queue.push(now + tx, EventKind::ChunkTxComplete { link });
    }

    fn on_tx_complete(&mut self, link: usize) -> Result<(), NetsimError> {
        let InTx { mut chunk, enqueue, dequeue, tx } = self.links[link].in_tx.take().expect("transmission in progress");
        let (from, to) = (self.net.link(link).from, self.net.link(link).to);
        let loss = self.links[link].loss;
        let lost = loss > 0.0 && self.loss_rngs[link].random::<f64>() < loss;
        if lost {
            self.drop_chunk(chunk, from, Some(to), DropReason::ChannelLoss);
        } else {
            let prop = self.links[link].prop_s;
            chunk.hops.push(HopRecord { node: from, next: to, link, enqueue, dequeue, tx_delay: tx, prop_delay: prop });
            self.queue.push(self.clock + prop, EventKind::ChunkArrival { node: to, chunk });
        }
        self.try_start(link);
        Ok(())
    }

    fn drop_chunk(&mut self, chunk: Box<Chunk>, node: usize, next: Option<usize>, reason: DropReason) {
        self.stats.dropped += 1;
        match reason {
            DropReason::QueueOverflow => self.stats.dropped_overflow += 1,
            DropReason::ChannelLoss => self.stats.dropped_loss += 1,
            DropReason::NoRoute => self.stats.dropped_no_route += 1,
            DropReason::TtlExpired => self.stats.dropped_ttl += 1,
        }
        self.in_network -= 1;
        let now = self.clock;
        self.log.push(LogRecord::Drop {
            t: now,
            flow: chunk.flow,
            chunk: chunk.index,
            node: self.net.name(node).to_string(),
            next_hop: next.map(|n| self.net.name(n).to_string()),
            reason,
        });
        let f = &mut self.flows[chunk.flow];
        if f.status != FlowStatus::Active {
            return;
        }
        if f.reliable {
            // Flow-layer retransmission after roughly one round trip.
            let rto = (now - chunk.injected_at).max(self.cfg.min_rto_s);
            f.retransmissions += 1;
            self.stats.retransmissions += 1;
            let fresh = Chunk { hops: Vec::new(), pending: None, ..*chunk };
            let src = fresh.src;
            self.queue.push(now + rto, EventKind::ChunkArrival { node: src, chunk: Box::new(fresh) });
        } else {
            f.status = FlowStatus::Failed;
            f.end = Some(now);
            let (flow, tag) = (f.id, f.tag);
            let rec = LogRecord::FlowFailed {
                t: now,
                flow,
                src: self.net.name(f.src).to_string(),
                dst: self.net.name(f.dst).to_string(),
            };
            self.log.push(rec);
            self.notifications.push_back(Notification::FlowFailed { flow, tag });
        }
    }
}
