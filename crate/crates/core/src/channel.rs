//! Radio channel conditions: analytic propagation models, the SNR to frame
//! loss mapping, and the airtime-sharing interference model.
//!
//! Trace-driven conditions live in [`crate::trace`].

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{LinkSpec, Topology};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("path loss is undefined for the trace_replay model; use replayed conditions")]
    NoAnalyticModel,
    #[error("{param} = {value} is out of range ({expected})")]
    BadParameter { param: &'static str, value: f64, expected: &'static str },
    #[error("contenders must be >= 1, got {0}")]
    NoContenders(usize),
    #[error("link endpoint {0} has no position")]
    MissingPosition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelModelKind {
    LogDistance,
    LogNormalShadowing,
    TraceReplay,
}

impl fmt::Display for ChannelModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelModelKind::LogDistance => "log_distance",
            ChannelModelKind::LogNormalShadowing => "log_normal_shadowing",
            ChannelModelKind::TraceReplay => "trace_replay",
        })
    }
}

/// Whether log-normal shadowing is redrawn every scheduler tick or fixed per link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShadowingMode {
    #[default]
    PerTick,
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModelConfig {
    pub name: ChannelModelKind,
    #[serde(default = "defaults::ref_loss_db")]
    pub ref_loss_db: f64,
    #[serde(default = "defaults::ref_distance_m")]
    pub ref_distance_m: f64,
    #[serde(default = "defaults::exponent")]
    pub exponent: f64,
    #[serde(default = "defaults::shadow_sigma_db")]
    pub shadow_sigma_db: f64,
    #[serde(default = "defaults::noise_floor_dbm")]
    pub noise_floor_dbm: f64,
    #[serde(default)]
    pub shadowing_mode: ShadowingMode,
    /// Width of the loss ramp above the MCS0 threshold.
    #[serde(default = "defaults::loss_ramp_db")]
    pub loss_ramp_db: f64,
    /// Loss at the MCS0 threshold, falling to zero across the ramp.
    #[serde(default = "defaults::loss_ramp_peak")]
    pub loss_ramp_peak: f64,
}

mod defaults {
    pub fn loss_ramp_db() -> f64 {
        3.0
    }
    pub fn loss_ramp_peak() -> f64 {
        0.5
    }
    pub fn ref_loss_db() -> f64 {
        40.0
    }
    pub fn ref_distance_m() -> f64 {
        1.0
    }
    pub fn exponent() -> f64 {
        3.0
    }
    pub fn shadow_sigma_db() -> f64 {
        4.0
    }
    pub fn noise_floor_dbm() -> f64 {
        -91.0
    }
    pub fn range_factor() -> f64 {
        2.0
    }
}

impl Default for ChannelModelConfig {
    fn default() -> Self {
        ChannelModelConfig {
            name: ChannelModelKind::LogDistance,
            ref_loss_db: defaults::ref_loss_db(),
            ref_distance_m: defaults::ref_distance_m(),
            exponent: defaults::exponent(),
            shadow_sigma_db: defaults::shadow_sigma_db(),
            noise_floor_dbm: defaults::noise_floor_dbm(),
            shadowing_mode: ShadowingMode::PerTick,
            loss_ramp_db: defaults::loss_ramp_db(),
            loss_ramp_peak: defaults::loss_ramp_peak(),
        }
    }
}

impl ChannelModelConfig {
    pub fn log_distance() -> Self {
        Self::default()
    }

    pub fn log_normal(sigma_db: f64) -> Self {
        ChannelModelConfig {
            name: ChannelModelKind::LogNormalShadowing,
            shadow_sigma_db: sigma_db,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.exponent > 1.0 && self.exponent <= 6.0) {
            return Err(ChannelError::BadParameter {
                param: "exponent",
                value: self.exponent,
                expected: "(1, 6]",
            });
        }
        if !(self.shadow_sigma_db >= 0.0) {
            return Err(ChannelError::BadParameter {
                param: "shadow_sigma_db",
                value: self.shadow_sigma_db,
                expected: ">= 0",
            });
        }
        if !(self.ref_distance_m > 0.0) {
            return Err(ChannelError::BadParameter {
                param: "ref_distance_m",
                value: self.ref_distance_m,
                expected: "> 0",
            });
        }
        if !(self.loss_ramp_db > 0.0) {
            return Err(ChannelError::BadParameter {
                param: "loss_ramp_db",
                value: self.loss_ramp_db,
                expected: "> 0",
            });
        }
        if !(0.0..=1.0).contains(&self.loss_ramp_peak) {
            return Err(ChannelError::BadParameter {
                param: "loss_ramp_peak",
                value: self.loss_ramp_peak,
                expected: "[0, 1]",
            });
        }
        for (param, value) in [("ref_loss_db", self.ref_loss_db), ("noise_floor_dbm", self.noise_floor_dbm)] {
            if !value.is_finite() {
                return Err(ChannelError::BadParameter { param, value, expected: "finite" });
            }
        }
        Ok(())
    }

    pub fn loss_model(&self, mcs0_snr_db: f64) -> LossModel {
        LossModel { mcs0_snr_db, ramp_db: self.loss_ramp_db, ramp_peak: self.loss_ramp_peak }
    }

    pub fn is_analytic(&self) -> bool {
        self.name != ChannelModelKind::TraceReplay
    }

    /// Deterministic part of the path loss (no shadowing). Distances below
    /// the reference distance are clamped to it.
    pub fn mean_path_loss_db(&self, distance_m: f64) -> f64 {
        let d = distance_m.max(self.ref_distance_m);
        self.ref_loss_db + 10.0 * self.exponent * (d / self.ref_distance_m).log10()
    }

    /// Largest distance at which the mean path loss still leaves `snr_db`
    /// of margin above the noise floor for the given transmit power.
    pub fn range_for_snr(&self, tx_power_dbm: f64, snr_db: f64) -> f64 {
        let budget = tx_power_dbm - self.noise_floor_dbm - snr_db - self.ref_loss_db;
        self.ref_distance_m * 10f64.powf(budget / (10.0 * self.exponent))
    }
}

/// Path loss in dB over `distance_m`.
///
/// Log-normal shadowing adds one Gaussian(0, sigma) draw from `rng`; the
/// log-distance model consumes no randomness.
pub fn path_loss_db<R: Rng + ?Sized>(
    model: &ChannelModelConfig,
    distance_m: f64,
    rng: &mut R,
) -> Result<f64, ChannelError> {
    if !(distance_m > 0.0) {
        return Err(ChannelError::NonPositiveDistance(distance_m));
    }
    let mean = match model.name {
        ChannelModelKind::TraceReplay => return Err(ChannelError::NoAnalyticModel),
        _ => model.mean_path_loss_db(distance_m),
    };
    match model.name {
        ChannelModelKind::LogNormalShadowing => Ok(mean + shadow_draw(model.shadow_sigma_db, rng)),
        _ => Ok(mean),
    }
}

pub(crate) fn shadow_draw<R: Rng + ?Sized>(sigma_db: f64, rng: &mut R) -> f64 {
    if sigma_db == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma_db).expect("sigma validated").sample(rng)
}

/// SNR to frame-loss mapping.
///
/// Below the MCS0 threshold the link is down (loss 1). From the threshold up
/// to `ramp_db` above it, loss falls linearly from `ramp_peak` to 0; above the
/// ramp the link is loss-free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossModel {
    pub mcs0_snr_db: f64,
    pub ramp_db: f64,
    pub ramp_peak: f64,
}

impl LossModel {
    pub fn new(mcs0_snr_db: f64) -> Self {
        LossModel { mcs0_snr_db, ramp_db: defaults::loss_ramp_db(), ramp_peak: defaults::loss_ramp_peak() }
    }

    pub fn loss(&self, snr_db: f64) -> f64 {
        if snr_db < self.mcs0_snr_db {
            return 1.0;
        }
        let above = snr_db - self.mcs0_snr_db;
        if above >= self.ramp_db {
            0.0
        } else {
            (self.ramp_peak * (1.0 - above / self.ramp_db)).clamp(0.0, 1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkCondition {
    pub rssi_dbm: f64,
    pub snr_db: f64,
    pub loss: f64,
}

impl LinkCondition {
    pub fn from_rssi(rssi_dbm: f64, noise_floor_dbm: f64, loss_model: &LossModel) -> Self {
        let snr_db = rssi_dbm - noise_floor_dbm;
        LinkCondition { rssi_dbm, snr_db, loss: loss_model.loss(snr_db) }
    }
}

pub fn distance_m(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn endpoint_positions(topo: &Topology, link: &LinkSpec) -> Result<([f64; 2], [f64; 2]), ChannelError> {
    let pos = |node: &str| {
        topo.node(node)
            .and_then(|n| n.position)
            .ok_or_else(|| ChannelError::MissingPosition(node.to_string()))
    };
    Ok((pos(&link.a.node)?, pos(&link.b.node)?))
}

/// Analytic condition of radio link `link` in the `a -> b` direction (or
/// `b -> a` when `reverse`), drawing shadowing from `rng`.
pub fn link_condition<R: Rng + ?Sized>(
    topo: &Topology,
    link: usize,
    reverse: bool,
    model: &ChannelModelConfig,
    loss_model: &LossModel,
    rng: &mut R,
) -> Result<LinkCondition, ChannelError> {
    let spec = &topo.links[link];
    let (pa, pb) = endpoint_positions(topo, spec)?;
    let pl = path_loss_db(model, distance_m(pa, pb).max(model.ref_distance_m), rng)?;
    let sender = if reverse { &spec.b } else { &spec.a };
    let tx = topo.radio(sender).map(|r| r.tx_power_dbm).unwrap_or(15.0);
    Ok(LinkCondition::from_rssi(tx - pl, model.noise_floor_dbm, loss_model))
}

/// Fair airtime sharing among `contenders` co-channel links (the link itself included).
pub fn effective_rate(nominal_rate_mbps: f64, contenders: usize) -> Result<f64, ChannelError> {
    if contenders < 1 {
        return Err(ChannelError::NoContenders(contenders));
    }
    Ok(nominal_rate_mbps / contenders as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceKind {
    None,
    #[default]
    AirtimeSharing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferenceModelConfig {
    #[serde(default)]
    pub name: InterferenceKind,
    /// Interference range as a multiple of the MCS0 communication range.
    #[serde(default = "defaults::range_factor")]
    pub range_factor: f64,
    /// Absolute interference range; overrides `range_factor` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range_m: Option<f64>,
}

impl Default for InterferenceModelConfig {
    fn default() -> Self {
        InterferenceModelConfig {
            name: InterferenceKind::AirtimeSharing,
            range_factor: defaults::range_factor(),
            range_m: None,
        }
    }
}

impl InterferenceModelConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.range_factor > 0.0) {
            return Err(ChannelError::BadParameter {
                param: "range_factor",
                value: self.range_factor,
                expected: "> 0",
            });
        }
        if let Some(r) = self.range_m {
            if !(r >= 0.0) {
                return Err(ChannelError::BadParameter { param: "range_m", value: r, expected: ">= 0" });
            }
        }
        Ok(())
    }
}

/// For every radio link, the other radio links it shares airtime with.
///
/// Two links contend when they use the same band and channel and either share
/// a node or, with positions known, some endpoint of one lies within the
/// interference range of some endpoint of the other. The range is measured
/// from the first link's transmit power.
pub fn contention_sets(
    topo: &Topology,
    channel: &ChannelModelConfig,
    interference: &InterferenceModelConfig,
    mcs0_snr_db: f64,
) -> Vec<Vec<usize>> {
    let n = topo.links.len();
    let mut sets = vec![Vec::new(); n];
    if interference.name == InterferenceKind::None {
        return sets;
    }
    let radio_cfg: Vec<_> = topo
        .links
        .iter()
        .map(|l| {
            let r = topo.radio(&l.a).expect("validated");
            (r.band, r.channel, r.tx_power_dbm.max(topo.radio(&l.b).expect("validated").tx_power_dbm))
        })
        .collect();
    let positions: Vec<Option<([f64; 2], [f64; 2])>> =
        topo.links.iter().map(|l| endpoint_positions(topo, l).ok()).collect();
    for i in 0..n {
        let range = match interference.range_m {
            Some(r) => r,
            None if channel.is_analytic() => {
                interference.range_factor * channel.range_for_snr(radio_cfg[i].2, mcs0_snr_db)
            }
            None => 0.0,
        };
        for j in 0..n {
            if i == j || radio_cfg[i].0 != radio_cfg[j].0 || radio_cfg[i].1 != radio_cfg[j].1 {
                continue;
            }
            let (li, lj) = (&topo.links[i], &topo.links[j]);
            let share = [&li.a.node, &li.b.node]
                .iter()
                .any(|n| **n == lj.a.node || **n == lj.b.node);
            let near = match (positions[i], positions[j]) {
                (Some((a1, b1)), Some((a2, b2))) => [a1, b1]
                    .iter()
                    .flat_map(|p| [a2, b2].map(|q| distance_m(*p, q)))
                    .any(|d| d <= range),
                _ => false,
            };
            if share || near {
                sets[i].push(j);
            }
        }
    }
    sets
}
