//! Periodic link scheduling: channel condition -> SNR -> MCS -> PHY rate ->
//! airtime-shared effective rate, once per tick for every directed radio link.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    contention_sets, distance_m, effective_rate, shadow_draw, ChannelError, ChannelModelConfig,
    ChannelModelKind, LinkCondition, LossModel, ShadowingMode,
};
use crate::rng::{SeedStreams, SimRng};
use crate::topology::{Endpoint, LinkKind, Network, Topology};
use crate::trace::{Trace, TraceError, TraceRecord, TraceWriter};

pub const DEFAULT_PERIOD_S: f64 = 5.0;

/// 802.11ac, 20 MHz, one spatial stream, 800 ns guard interval.
pub const DEFAULT_MIN_SNR_DB: [f64; 9] = [5.0, 8.0, 11.0, 14.0, 18.0, 22.0, 24.0, 26.0, 29.0];
pub const DEFAULT_RATE_MBPS: [f64; 9] = [6.5, 13.0, 19.5, 26.0, 39.0, 52.0, 58.5, 65.0, 78.0];

#[derive(Debug, Error)]
pub enum SchedulerError {
    #[error("MCS table: {0}")]
    BadTable(String),
    #[error("MCS index {0} is not in the table")]
    UnknownMcs(i32),
    #[error("tick time {t} is not a multiple of the {period} s period")]
    OffTick { t: f64, period: f64 },
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("no trace loaded for {0}")]
    MissingTrace(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsEntry {
    pub mcs_index: i32,
    pub min_snr_db: f64,
    pub rate_mbps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    entries: Vec<McsEntry>,
}

impl Default for McsTable {
    fn default() -> Self {
        let entries = (0..9)
            .map(|i| McsEntry { mcs_index: i as i32, min_snr_db: DEFAULT_MIN_SNR_DB[i], rate_mbps: DEFAULT_RATE_MBPS[i] })
            .collect();
        McsTable { entries }
    }
}

impl McsTable {
    pub fn new(mut entries: Vec<McsEntry>) -> Result<Self, SchedulerError> {
        entries.sort_by_key(|e| e.mcs_index);
        if entries.is_empty() {
            return Err(SchedulerError::BadTable("table is empty".into()));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.mcs_index != i as i32 {
                return Err(SchedulerError::BadTable(format!("indices must run 0..{} without gaps", entries.len())));
            }
            if !e.min_snr_db.is_finite() || !(e.rate_mbps > 0.0) {
                return Err(SchedulerError::BadTable(format!("row {i}: bad threshold or rate")));
            }
            if i > 0 {
                let prev = &entries[i - 1];
                if e.min_snr_db <= prev.min_snr_db || e.rate_mbps <= prev.rate_mbps {
                    return Err(SchedulerError::BadTable(format!(
                        "thresholds and rates must strictly increase (MCS {} vs {})",
                        i - 1,
                        i
                    )));
                }
            }
        }
        Ok(McsTable { entries })
    }

    /// Parse `mcs_index,min_snr_db,rate_mbps` CSV (header required).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, SchedulerError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| SchedulerError::BadTable(e.to_string()))?;
        if header.iter().collect::<Vec<_>>() != ["mcs_index", "min_snr_db", "rate_mbps"] {
            return Err(SchedulerError::BadTable("expected header mcs_index,min_snr_db,rate_mbps".into()));
        }
        let mut entries = Vec::new();
        for row in rdr.deserialize::<McsEntry>() {
            entries.push(row.map_err(|e| SchedulerError::BadTable(e.to_string()))?);
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, SchedulerError> {
        let f = std::fs::File::open(path)
            .map_err(|e| SchedulerError::BadTable(format!("{}: {e}", path.display())))?;
        Self::read_csv(f)
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }

    pub fn mcs0_snr_db(&self) -> f64 {
        self.entries[0].min_snr_db
    }

    /// Highest MCS whose threshold is at or below `snr_db`; -1 when none is.
    pub fn select_mcs(&self, snr_db: f64) -> i32 {
        let n = self.entries.partition_point(|e| e.min_snr_db <= snr_db);
        n as i32 - 1
    }

    pub fn rate_for_mcs(&self, mcs_index: i32) -> Result<f64, SchedulerError> {
        if mcs_index == -1 {
            return Ok(0.0);
        }
        usize::try_from(mcs_index)
            .ok()
            .and_then(|i| self.entries.get(i))
            .map(|e| e.rate_mbps)
            .ok_or(SchedulerError::UnknownMcs(mcs_index))
    }
}

pub fn select_mcs(table: &McsTable, snr_db: f64) -> i32 {
    table.select_mcs(snr_db)
}

pub fn rate_for_mcs(table: &McsTable, mcs_index: i32) -> Result<f64, SchedulerError> {
    table.rate_for_mcs(mcs_index)
}

/// Which trace column drives MCS selection during replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReplayField {
    #[default]
    Rssi,
    Mcs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerConfig {
    pub period_s: f64,
    pub table: McsTable,
    pub replay_field: ReplayField,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig { period_s: DEFAULT_PERIOD_S, table: McsTable::default(), replay_field: ReplayField::Rssi }
    }
}

/// Scheduler output for one directed radio link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    /// Directed link id in the [`Network`].
    pub link: usize,
    pub rssi_dbm: f64,
    pub snr_db: f64,
    /// -1 when the link is down.
    pub mcs_index: i32,
    pub nominal_rate_mbps: f64,
    pub effective_rate_mbps: f64,
    pub loss: f64,
    pub updated_at: f64,
}

impl LinkState {
    pub fn is_up(&self) -> bool {
        self.mcs_index >= 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SchedulerWarning {
    TraceExhausted { node: String, iface: String, t: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tick {
    pub t: f64,
    pub states: Vec<LinkState>,
    pub warnings: Vec<SchedulerWarning>,
}

/// Full per-tick timeline of a scheduler run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Timeline {
    pub ticks: Vec<Tick>,
}

impl Timeline {
    /// `t,link,mcs_index,rssi_dbm,nominal_rate_mbps,effective_rate_mbps,loss` rows.
    pub fn to_csv(&self, net: &Network) -> String {
        let mut out = String::from("t,link,mcs_index,rssi_dbm,nominal_rate_mbps,effective_rate_mbps,loss\n");
        for tick in &self.ticks {
            for s in &tick.states {
                out.push_str(&format!(
                    "{:?},{},{},{:?},{:?},{:?},{:?}\n",
                    tick.t,
                    net.link_label(s.link),
                    s.mcs_index,
                    s.rssi_dbm,
                    s.nominal_rate_mbps,
                    s.effective_rate_mbps,
                    s.loss
                ));
            }
        }
        out
    }
}

/// Receives one trace row per interface per tick in generation mode.
pub trait TraceSink {
    fn record(&mut self, node: &str, iface: &str, rec: &TraceRecord) -> Result<(), TraceError>;
}

/// In-memory sink, keyed by (node, iface).
#[derive(Debug, Default, Clone)]
pub struct MemoryTraceSink {
    pub rows: BTreeMap<(String, String), Vec<TraceRecord>>,
}

impl TraceSink for MemoryTraceSink {
    fn record(&mut self, node: &str, iface: &str, rec: &TraceRecord) -> Result<(), TraceError> {
        self.rows.entry((node.to_string(), iface.to_string())).or_default().push(*rec);
        Ok(())
    }
}

/// Writes `<dir>/<node>_<iface>.csv` files.
pub struct DirTraceSink {
    dir: PathBuf,
    writers: BTreeMap<(String, String), TraceWriter<std::io::BufWriter<std::fs::File>>>,
    paths: Vec<PathBuf>,
}

impl DirTraceSink {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DirTraceSink { dir: dir.into(), writers: BTreeMap::new(), paths: Vec::new() }
    }

    /// Flush every file; returns the paths written.
    pub fn finish(self) -> Result<Vec<PathBuf>, TraceError> {
        for (_, w) in self.writers {
            w.finish()?;
        }
        Ok(self.paths)
    }
}

impl TraceSink for DirTraceSink {
    fn record(&mut self, node: &str, iface: &str, rec: &TraceRecord) -> Result<(), TraceError> {
        let key = (node.to_string(), iface.to_string());
        if !self.writers.contains_key(&key) {
            let (w, path) = TraceWriter::create(&self.dir, node, iface)?;
            self.paths.push(path);
            self.writers.insert(key.clone(), w);
        }
        self.writers.get_mut(&key).unwrap().write_record(rec)
    }
}

#[derive(Debug, Clone)]
struct RadioDirLink {
    id: usize,
    link: usize,
    tx_power_dbm: f64,
    /// Index into `LinkScheduler::traces` when the egress interface replays.
    trace: Option<usize>,
}

#[derive(Debug, Clone)]
struct EgressIface {
    node: String,
    iface: String,
    dlinks: Vec<usize>,
}

/// The tc-equivalent: turns channel conditions into per-directed-link rates.
#[derive(Debug, Clone)]
pub struct LinkScheduler {
    cfg: SchedulerConfig,
    channel: ChannelModelConfig,
    loss_model: LossModel,
    dlinks: Vec<RadioDirLink>,
    ifaces: Vec<EgressIface>,
    traces: Vec<(Endpoint, Trace)>,
    exhausted: Vec<bool>,
    distances: Vec<Option<f64>>,
    shadow_rngs: Vec<SimRng>,
    static_shadow: Vec<f64>,
    contention: Vec<Vec<usize>>,
}

/// Load every `trace_file` referenced by the topology, resolving relative
/// paths against `base_dir`.
pub fn load_traces(topo: &Topology, base_dir: &Path) -> Result<BTreeMap<Endpoint, Trace>, TraceError> {
    let mut out = BTreeMap::new();
    for node in &topo.nodes {
        for r in &node.interfaces {
            if let Some(file) = &r.trace_file {
                let path = base_dir.join(file);
                out.insert(Endpoint { node: node.id.clone(), iface: r.iface_id.clone() }, Trace::load(&path)?);
            }
        }
    }
    Ok(out)
}

impl LinkScheduler {
    pub fn new(
        topo: &Topology,
        net: &Network,
        cfg: SchedulerConfig,
        traces: BTreeMap<Endpoint, Trace>,
        streams: &SeedStreams,
    ) -> Result<Self, SchedulerError> {
        let channel = topo.channel_model.clone();
        let loss_model = channel.loss_model(cfg.table.mcs0_snr_db());
        let traces: Vec<(Endpoint, Trace)> = traces.into_iter().collect();
        let mut dlinks = Vec::new();
        let mut iface_map: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut ifaces: Vec<EgressIface> = Vec::new();
        for dl in net.links() {
            let LinkKind::Radio { link, iface } = dl.kind else { continue };
            let node = &topo.nodes[dl.from];
            let radio = &node.interfaces[iface];
            let ep = Endpoint { node: node.id.clone(), iface: radio.iface_id.clone() };
            let trace = traces.iter().position(|(e, _)| *e == ep);
            if trace.is_none() && !channel.is_analytic() {
                return Err(SchedulerError::MissingTrace(ep.to_string()));
            }
            let slot = *iface_map.entry((dl.from, iface)).or_insert_with(|| {
                ifaces.push(EgressIface { node: ep.node.clone(), iface: ep.iface.clone(), dlinks: Vec::new() });
                ifaces.len() - 1
            });
            ifaces[slot].dlinks.push(dlinks.len());
            dlinks.push(RadioDirLink { id: dl.id, link, tx_power_dbm: radio.tx_power_dbm, trace });
        }
        ifaces.sort_by(|a, b| (&a.node, &a.iface).cmp(&(&b.node, &b.iface)));

        let distances: Vec<Option<f64>> = topo
            .links
            .iter()
            .map(|l| {
                let pa = topo.node(&l.a.node)?.position?;
                let pb = topo.node(&l.b.node)?.position?;
                Some(distance_m(pa, pb))
            })
            .collect();
        let mut shadow_rngs: Vec<SimRng> = topo
            .links
            .iter()
            .map(|l| streams.stream(&format!("shadow/{}:{}-{}:{}", l.a.node, l.a.iface, l.b.node, l.b.iface)))
            .collect();
        let static_shadow = if channel.name == ChannelModelKind::LogNormalShadowing
            && channel.shadowing_mode == ShadowingMode::Static
        {
            shadow_rngs.iter_mut().map(|r| shadow_draw(channel.shadow_sigma_db, r)).collect()
        } else {
            vec![0.0; topo.links.len()]
        };
        let contention =
            contention_sets(topo, &channel, &topo.interference_model, cfg.table.mcs0_snr_db());
        let exhausted = vec![false; traces.len()];
        Ok(LinkScheduler {
            cfg,
            channel,
            loss_model,
            dlinks,
            ifaces,
            traces,
            exhausted,
            distances,
            shadow_rngs,
            static_shadow,
            contention,
        })
    }

    pub fn period_s(&self) -> f64 {
        self.cfg.period_s
    }

    pub fn table(&self) -> &McsTable {
        &self.cfg.table
    }

    pub fn contention(&self) -> &[Vec<usize>] {
        &self.contention
    }

    fn analytic_path_loss(&mut self, link: usize) -> Result<f64, SchedulerError> {
        let d = self.distances[link]
            .ok_or_else(|| ChannelError::MissingPosition(format!("radio link {link}")))?
            .max(self.channel.ref_distance_m);
        let mean = self.channel.mean_path_loss_db(d);
        let shadow = match (self.channel.name, self.channel.shadowing_mode) {
            (ChannelModelKind::LogNormalShadowing, ShadowingMode::PerTick) => {
                shadow_draw(self.channel.shadow_sigma_db, &mut self.shadow_rngs[link])
            }
            (ChannelModelKind::LogNormalShadowing, ShadowingMode::Static) => self.static_shadow[link],
            (ChannelModelKind::LogDistance, _) => 0.0,
            (ChannelModelKind::TraceReplay, _) => return Err(ChannelError::NoAnalyticModel.into()),
        };
        Ok(mean + shadow)
    }

    /// Recompute every directed radio link at tick time `t`.
    ///
    /// `active[i]` tells whether radio link `i` carried traffic during the
    /// previous window; it drives the airtime-sharing contender count.
    pub fn schedule_tick(&mut self, t: f64, active: &[bool]) -> Result<Tick, SchedulerError> {
        let k = (t / self.cfg.period_s).round();
        if !(t >= 0.0) || (k * self.cfg.period_s - t).abs() > 1e-9 * self.cfg.period_s.max(1.0) {
            return Err(SchedulerError::OffTick { t, period: self.cfg.period_s });
        }
        let n_links = self.distances.len();
        // One shadowing draw per undirected link per tick, shared by both
        // directions, and only for links with an analytic direction.
        let mut path_loss: Vec<Option<f64>> = vec![None; n_links];
        let needs_model: Vec<bool> = {
            let mut v = vec![false; n_links];
            for dl in &self.dlinks {
                if dl.trace.is_none() {
                    v[dl.link] = true;
                }
            }
            v
        };
        for (link, needed) in needs_model.iter().enumerate() {
            if *needed {
                path_loss[link] = Some(self.analytic_path_loss(link)?);
            }
        }

        let mut warnings = Vec::new();
        let mut states = Vec::with_capacity(self.dlinks.len());
        for dl in &self.dlinks {
            let (cond, mcs) = match dl.trace {
                Some(ti) => {
                    let (ep, trace) = &self.traces[ti];
                    let replay = trace.replay(t);
                    if replay.exhausted && !self.exhausted[ti] {
                        self.exhausted[ti] = true;
                        log::warn!("trace for {ep} exhausted at t={t}; holding last record");
                        warnings.push(SchedulerWarning::TraceExhausted {
                            node: ep.node.clone(),
                            iface: ep.iface.clone(),
                            t,
                        });
                    }
                    let rec = replay.record;
                    let snr = rec.rssi_dbm - self.channel.noise_floor_dbm;
                    let mcs = match self.cfg.replay_field {
                        ReplayField::Rssi => self.cfg.table.select_mcs(snr),
                        ReplayField::Mcs => rec.mcs_index,
                    };
                    (LinkCondition { rssi_dbm: rec.rssi_dbm, snr_db: snr, loss: rec.loss }, mcs)
                }
                None => {
                    let pl = path_loss[dl.link].expect("computed above");
                    let cond = LinkCondition::from_rssi(dl.tx_power_dbm - pl, self.channel.noise_floor_dbm, &self.loss_model);
                    (cond, self.cfg.table.select_mcs(cond.snr_db))
                }
            };
            let nominal = self.cfg.table.rate_for_mcs(mcs)?;
            let contenders = 1 + self.contention[dl.link].iter().filter(|&&j| active.get(j).copied().unwrap_or(false)).count();
            let (effective, loss) = if mcs < 0 { (0.0, 1.0) } else { (effective_rate(nominal, contenders)?, cond.loss) };
            states.push(LinkState {
                link: dl.id,
                rssi_dbm: cond.rssi_dbm,
                snr_db: cond.snr_db,
                mcs_index: mcs,
                nominal_rate_mbps: nominal,
                effective_rate_mbps: effective,
                loss,
                updated_at: t,
            });
        }
        Ok(Tick { t, states, warnings })
    }

    /// One trace row per egress interface. Interfaces with several links
    /// record their weakest (lowest RSSI) link.
    pub fn emit_trace_rows(&self, tick: &Tick, sink: &mut dyn TraceSink) -> Result<(), TraceError> {
        for iface in &self.ifaces {
            let s = iface
                .dlinks
                .iter()
                .map(|&i| &tick.states[i])
                .min_by(|a, b| a.rssi_dbm.total_cmp(&b.rssi_dbm).then(a.link.cmp(&b.link)))
                .expect("egress interface has links");
            let rec = TraceRecord {
                time_s: tick.t,
                mcs_index: s.mcs_index,
                rssi_dbm: s.rssi_dbm,
                loss: s.loss,
                traffic_rate_mbps: s.effective_rate_mbps,
            };
            sink.record(&iface.node, &iface.iface, &rec)?;
        }
        Ok(())
    }

    /// Number of ticks in `[0, horizon_s]`.
    pub fn tick_count(&self, horizon_s: f64) -> usize {
        (horizon_s / self.cfg.period_s + 1e-9).floor() as usize + 1
    }

    /// Standalone scheduler run without traffic: ticks at 0, period, 2*period,
    /// ... up to `horizon_s`, optionally recording trace rows.
    pub fn run_scheduler(
        &mut self,
        horizon_s: f64,
        mut sink: Option<&mut dyn TraceSink>,
    ) -> Result<Timeline, SchedulerError> {
        if !(horizon_s > 0.0) {
            return Err(SchedulerError::BadHorizon(horizon_s));
        }
        let idle = vec![false; self.distances.len()];
        let mut timeline = Timeline::default();
        for k in 0..self.tick_count(horizon_s) {
            let tick = self.schedule_tick(k as f64 * self.cfg.period_s, &idle)?;
            if let Some(s) = sink.as_deref_mut() {
                self.emit_trace_rows(&tick, s)?;
            }
            timeline.ticks.push(tick);
        }
        Ok(timeline)
    }
}
