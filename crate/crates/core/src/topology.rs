//! Scenario topology: nodes, radios, links and the channel-model bindings.
//!
//! [`parse_config`] turns the JSON scenario text into a validated, immutable
//! [`Topology`]. [`Network`] is the directed-link view of the same topology
//! that the engine and the routing policies work on: every radio link becomes
//! two directed links, and every compute host attached to a router gets an
//! ideal (infinite-rate, lossless) attachment link in each direction.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::channel::{ChannelError, ChannelModelConfig, ChannelModelKind, InterferenceModelConfig};

/// Top-level keys owned by the topology part of the scenario file.
pub const TOPOLOGY_KEYS: &[&str] = &["nodes", "links", "channel_model", "interference_model", "seed"];

pub const CHANNELS_2_4GHZ: std::ops::RangeInclusive<u32> = 1..=13;
pub const CHANNELS_5GHZ: &[u32] = &[
    36, 40, 44, 48, 52, 56, 60, 64, 100, 104, 108, 112, 116, 120, 124, 128, 132, 136, 140, 144,
    149, 153, 157, 161, 165,
];
pub const DEFAULT_5GHZ_CHANNEL: u32 = 36;
pub const DEFAULT_2_4GHZ_CHANNEL: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("node `{node}` declares interface `{iface}` twice")]
    DuplicateInterface { node: String, iface: String },
    #[error("node `{node}` has a non-finite position")]
    NonFinitePosition { node: String },
    #[error("node `{node}` needs a position for the `{model}` channel model")]
    MissingPosition { node: String, model: String },
    #[error("node `{node}` ({role}): {reason}")]
    BadAttachment { node: String, role: Role, reason: String },
    #[error("interface {node}/{iface}: channel {channel} is not valid for band {band}")]
    InvalidChannel { node: String, iface: String, band: Band, channel: u32 },
    #[error("interface {node}/{iface}: tx_power_dbm {value} outside [0, 30]")]
    TxPowerOutOfRange { node: String, iface: String, value: f64 },
    #[error("interface {node}/{iface}: width_mhz {value} not one of 20, 40, 80, 160")]
    InvalidWidth { node: String, iface: String, value: u32 },
    #[error("link {index} references unknown interface {node}/{iface}")]
    UnknownEndpoint { index: usize, node: String, iface: String },
    #[error("link {index} connects {node} to itself")]
    SelfLink { index: usize, node: String },
    #[error("link {index} duplicates link {first} ({a} <-> {b})")]
    DuplicateLink { index: usize, first: usize, a: String, b: String },
    #[error("link {index}: {a} ({a_cfg}) and {b} ({b_cfg}) are not on the same band/channel")]
    ChannelMismatch { index: usize, a: String, b: String, a_cfg: String, b_cfg: String },
    #[error("router mesh is disconnected: {}", format_components(.components))]
    DisconnectedMesh { components: Vec<Vec<String>> },
    #[error("interface {node}/{iface} carries a link but has no trace_file (channel model is trace_replay)")]
    MissingTrace { node: String, iface: String },
    #[error("channel model: {0}")]
    ChannelModel(#[from] ChannelError),
}

fn format_components(components: &[Vec<String>]) -> String {
    components
        .iter()
        .map(|c| format!("{{{}}}", c.join(", ")))
        .collect::<Vec<_>>()
        .join(" / ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Router,
    Worker,
    Aggregator,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Router => "router",
            Role::Worker => "worker",
            Role::Aggregator => "aggregator",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    #[serde(rename = "2.4GHz")]
    Ghz2_4,
    #[serde(rename = "5GHz")]
    Ghz5,
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Band::Ghz2_4 => "2.4GHz",
            Band::Ghz5 => "5GHz",
        })
    }
}

impl Band {
    pub fn is_valid_channel(self, channel: u32) -> bool {
        match self {
            Band::Ghz2_4 => CHANNELS_2_4GHZ.contains(&channel),
            Band::Ghz5 => CHANNELS_5GHZ.contains(&channel),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawRadio")]
pub struct RadioSpec {
    pub iface_id: String,
    pub band: Band,
    pub channel: u32,
    pub width_mhz: u32,
    pub tx_power_dbm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_file: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRadio {
    iface_id: String,
    #[serde(default)]
    band: Option<Band>,
    #[serde(default)]
    channel: Option<u32>,
    #[serde(default = "default_width")]
    width_mhz: u32,
    #[serde(default = "default_tx_power")]
    tx_power_dbm: f64,
    #[serde(default)]
    trace_file: Option<String>,
}

fn default_width() -> u32 {
    20
}

fn default_tx_power() -> f64 {
    15.0
}

impl From<RawRadio> for RadioSpec {
    fn from(raw: RawRadio) -> Self {
        // Omitted assignments put every backbone radio on one 5 GHz channel.
        let band = raw.band.unwrap_or(Band::Ghz5);
        let channel = raw.channel.unwrap_or(match band {
            Band::Ghz5 => DEFAULT_5GHZ_CHANNEL,
            Band::Ghz2_4 => DEFAULT_2_4GHZ_CHANNEL,
        });
        RadioSpec {
            iface_id: raw.iface_id,
            band,
            channel,
            width_mhz: raw.width_mhz,
            tx_power_dbm: raw.tx_power_dbm,
            trace_file: raw.trace_file,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 2]>,
    #[serde(default)]
    pub interfaces: Vec<RadioSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attached_router: Option<String>,
}

impl NodeSpec {
    pub fn interface(&self, iface: &str) -> Option<(usize, &RadioSpec)> {
        self.interfaces.iter().enumerate().find(|(_, r)| r.iface_id == iface)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Endpoint {
    pub node: String,
    pub iface: String,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.node, self.iface)
    }
}

/// One radio adjacency, written in JSON as `[nodeA, ifaceA, nodeB, ifaceB]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(String, String, String, String)", into = "(String, String, String, String)")]
pub struct LinkSpec {
    pub a: Endpoint,
    pub b: Endpoint,
}

impl From<(String, String, String, String)> for LinkSpec {
    fn from((na, ia, nb, ib): (String, String, String, String)) -> Self {
        LinkSpec {
            a: Endpoint { node: na, iface: ia },
            b: Endpoint { node: nb, iface: ib },
        }
    }
}

impl From<LinkSpec> for (String, String, String, String) {
    fn from(l: LinkSpec) -> Self {
        (l.a.node, l.a.iface, l.b.node, l.b.iface)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub channel_model: ChannelModelConfig,
    #[serde(default)]
    pub interference_model: InterferenceModelConfig,
    #[serde(default)]
    pub seed: u64,
}

/// Parse and validate the topology part of a scenario file.
///
/// Keys that belong to other sections of the scenario (scheduler, netsim,
/// routing, fl) are ignored here; [`crate::scenario::Scenario`] checks them.
pub fn parse_config(raw: &str) -> Result<Topology, TopologyError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| TopologyError::Schema {
        path: "$".into(),
        message: e.to_string(),
    })?;
    topology_from_value(&value)
}

pub(crate) fn topology_from_value(value: &Value) -> Result<Topology, TopologyError> {
    let Value::Object(map) = value else {
        return Err(TopologyError::Schema {
            path: "$".into(),
            message: "scenario must be a JSON object".into(),
        });
    };
    let mut sub = serde_json::Map::new();
    for key in TOPOLOGY_KEYS {
        if let Some(v) = map.get(*key) {
            sub.insert((*key).to_string(), v.clone());
        }
    }
    let topo: Topology = from_value_with_path(Value::Object(sub))?;
    topo.validate()?;
    Ok(topo)
}

pub(crate) fn from_value_with_path<T: serde::de::DeserializeOwned>(
    value: Value,
) -> Result<T, TopologyError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        TopologyError::Schema {
            path: if path == "." { "$".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })
}

impl Topology {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn radio(&self, ep: &Endpoint) -> Option<&RadioSpec> {
        self.node(&ep.node)?.interface(&ep.iface).map(|(_, r)| r)
    }

    pub fn routers(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(|n| n.role == Role::Router)
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        self.channel_model.validate()?;
        self.interference_model.validate()?;
        let analytic = self.channel_model.name != ChannelModelKind::TraceReplay;

        let mut ids = BTreeSet::new();
        for node in &self.nodes {
            if !ids.insert(node.id.as_str()) {
                return Err(TopologyError::DuplicateNode(node.id.clone()));
            }
        }

        let mut linked: BTreeSet<(&str, &str)> = BTreeSet::new();
        for l in &self.links {
            linked.insert((&l.a.node, &l.a.iface));
            linked.insert((&l.b.node, &l.b.iface));
        }

        for node in &self.nodes {
            if let Some([x, y]) = node.position {
                if !x.is_finite() || !y.is_finite() {
                    return Err(TopologyError::NonFinitePosition { node: node.id.clone() });
                }
            }
            let mut ifaces = BTreeSet::new();
            for radio in &node.interfaces {
                if !ifaces.insert(radio.iface_id.as_str()) {
                    return Err(TopologyError::DuplicateInterface {
                        node: node.id.clone(),
                        iface: radio.iface_id.clone(),
                    });
                }
                if !radio.band.is_valid_channel(radio.channel) {
                    return Err(TopologyError::InvalidChannel {
                        node: node.id.clone(),
                        iface: radio.iface_id.clone(),
                        band: radio.band,
                        channel: radio.channel,
                    });
                }
                if !(0.0..=30.0).contains(&radio.tx_power_dbm) {
                    return Err(TopologyError::TxPowerOutOfRange {
                        node: node.id.clone(),
                        iface: radio.iface_id.clone(),
                        value: radio.tx_power_dbm,
                    });
                }
                if ![20, 40, 80, 160].contains(&radio.width_mhz) {
                    return Err(TopologyError::InvalidWidth {
                        node: node.id.clone(),
                        iface: radio.iface_id.clone(),
                        value: radio.width_mhz,
                    });
                }
                let is_linked = linked.contains(&(node.id.as_str(), radio.iface_id.as_str()));
                if !analytic && is_linked && radio.trace_file.is_none() {
                    return Err(TopologyError::MissingTrace {
                        node: node.id.clone(),
                        iface: radio.iface_id.clone(),
                    });
                }
            }
            self.validate_attachment(node, &linked)?;
        }

        let mut seen: BTreeMap<(Endpoint, Endpoint), usize> = BTreeMap::new();
        for (index, link) in self.links.iter().enumerate() {
            let mut radios = [None, None];
            for (slot, ep) in [&link.a, &link.b].into_iter().enumerate() {
                radios[slot] = Some(self.radio(ep).ok_or_else(|| TopologyError::UnknownEndpoint {
                    index,
                    node: ep.node.clone(),
                    iface: ep.iface.clone(),
                })?);
            }
            let (ra, rb) = (radios[0].unwrap(), radios[1].unwrap());
            if link.a.node == link.b.node {
                return Err(TopologyError::SelfLink { index, node: link.a.node.clone() });
            }
            if ra.band != rb.band || ra.channel != rb.channel {
                return Err(TopologyError::ChannelMismatch {
                    index,
                    a: link.a.to_string(),
                    b: link.b.to_string(),
                    a_cfg: format!("{} ch {}", ra.band, ra.channel),
                    b_cfg: format!("{} ch {}", rb.band, rb.channel),
                });
            }
            let key = if link.a <= link.b {
                (link.a.clone(), link.b.clone())
            } else {
                (link.b.clone(), link.a.clone())
            };
            if let Some(first) = seen.get(&key) {
                return Err(TopologyError::DuplicateLink {
                    index,
                    first: *first,
                    a: link.a.to_string(),
                    b: link.b.to_string(),
                });
            }
            seen.insert(key, index);
            if analytic {
                for ep in [&link.a, &link.b] {
                    let node = self.node(&ep.node).unwrap();
                    if node.position.is_none() {
                        return Err(TopologyError::MissingPosition {
                            node: node.id.clone(),
                            model: self.channel_model.name.to_string(),
                        });
                    }
                }
            }
        }

        self.validate_mesh_connected()
    }

    fn validate_attachment(
        &self,
        node: &NodeSpec,
        linked: &BTreeSet<(&str, &str)>,
    ) -> Result<(), TopologyError> {
        let bad = |reason: &str| TopologyError::BadAttachment {
            node: node.id.clone(),
            role: node.role,
            reason: reason.to_string(),
        };
        match node.role {
            Role::Router => {
                if node.attached_router.is_some() {
                    return Err(bad("routers cannot set attached_router"));
                }
            }
            Role::Worker | Role::Aggregator => match &node.attached_router {
                Some(router) => {
                    if !node.interfaces.is_empty() {
                        return Err(bad("has both attached_router and a radio"));
                    }
                    match self.node(router) {
                        Some(r) if r.role == Role::Router => {}
                        Some(_) => return Err(bad(&format!("attached_router `{router}` is not a router"))),
                        None => return Err(bad(&format!("attached_router `{router}` does not exist"))),
                    }
                }
                None => {
                    if node.interfaces.len() != 1 {
                        return Err(bad("needs exactly one attachment point (one radio or attached_router)"));
                    }
                    let iface = &node.interfaces[0].iface_id;
                    if !linked.contains(&(node.id.as_str(), iface.as_str())) {
                        return Err(bad(&format!("radio `{iface}` is not linked to anything")));
                    }
                }
            },
        }
        Ok(())
    }

    fn validate_mesh_connected(&self) -> Result<(), TopologyError> {
        let routers: Vec<&str> = self.routers().map(|n| n.id.as_str()).collect();
        if routers.len() <= 1 {
            return Ok(());
        }
        let is_router: BTreeSet<&str> = routers.iter().copied().collect();
        let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for l in &self.links {
            if is_router.contains(l.a.node.as_str()) && is_router.contains(l.b.node.as_str()) {
                adj.entry(&l.a.node).or_default().push(&l.b.node);
                adj.entry(&l.b.node).or_default().push(&l.a.node);
            }
        }
        let mut unvisited: BTreeSet<&str> = is_router.clone();
        let mut components = Vec::new();
        while let Some(&start) = unvisited.iter().next() {
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([start]);
            unvisited.remove(start);
            while let Some(n) = queue.pop_front() {
                comp.push(n.to_string());
                for &m in adj.get(n).map(Vec::as_slice).unwrap_or(&[]) {
                    if unvisited.remove(m) {
                        queue.push_back(m);
                    }
                }
            }
            comp.sort();
            components.push(comp);
        }
        if components.len() > 1 {
            return Err(TopologyError::DisconnectedMesh { components });
        }
        Ok(())
    }
}

/// One entry of the adjacency map.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Adjacent {
    pub neighbor: String,
    pub local_iface: String,
    pub remote_iface: String,
}

/// Symmetric radio adjacency. Every configured link appears once per direction.
pub fn build_adjacency(topo: &Topology) -> BTreeMap<String, Vec<Adjacent>> {
    let mut adj: BTreeMap<String, Vec<Adjacent>> =
        topo.nodes.iter().map(|n| (n.id.clone(), Vec::new())).collect();
    for l in &topo.links {
        for (from, to) in [(&l.a, &l.b), (&l.b, &l.a)] {
            adj.entry(from.node.clone()).or_default().push(Adjacent {
                neighbor: to.node.clone(),
                local_iface: from.iface.clone(),
                remote_iface: to.iface.clone(),
            });
        }
    }
    for list in adj.values_mut() {
        list.sort();
    }
    adj
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    /// Directed half of radio link `link`, leaving interface `iface` of the
    /// sending node (index into its `interfaces`).
    Radio { link: usize, iface: usize },
    /// Ideal host <-> router attachment.
    Attachment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectedLink {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub kind: LinkKind,
}

/// Directed-link graph over node indices.
///
/// Radio link `i` yields directed links `2i` (a to b) and `2i + 1` (b to a);
/// attachment links follow, in node order, host-to-router then router-to-host.
#[derive(Debug, Clone)]
pub struct Network {
    names: Vec<String>,
    roles: Vec<Role>,
    links: Vec<DirectedLink>,
    /// Outgoing directed links per node, ordered by neighbor id then link id.
    out: Vec<Vec<usize>>,
    radio_links: usize,
}

impl Network {
    pub fn new(topo: &Topology) -> Self {
        let names: Vec<String> = topo.nodes.iter().map(|n| n.id.clone()).collect();
        let roles: Vec<Role> = topo.nodes.iter().map(|n| n.role).collect();
        let index = |id: &str| topo.node_index(id).expect("validated topology");
        let mut links = Vec::new();
        for (i, l) in topo.links.iter().enumerate() {
            let (a, b) = (index(&l.a.node), index(&l.b.node));
            let ia = topo.nodes[a].interface(&l.a.iface).expect("validated").0;
            let ib = topo.nodes[b].interface(&l.b.iface).expect("validated").0;
            links.push(DirectedLink { id: 2 * i, from: a, to: b, kind: LinkKind::Radio { link: i, iface: ia } });
            links.push(DirectedLink { id: 2 * i + 1, from: b, to: a, kind: LinkKind::Radio { link: i, iface: ib } });
        }
        let radio_links = topo.links.len();
        for (h, node) in topo.nodes.iter().enumerate() {
            if let Some(r) = &node.attached_router {
                let r = index(r);
                let id = links.len();
                links.push(DirectedLink { id, from: h, to: r, kind: LinkKind::Attachment });
                links.push(DirectedLink { id: id + 1, from: r, to: h, kind: LinkKind::Attachment });
            }
        }
        let mut out = vec![Vec::new(); names.len()];
        for l in &links {
            out[l.from].push(l.id);
        }
        for list in &mut out {
            list.sort_by(|&x, &y| names[links[x].to].cmp(&names[links[y].to]).then(x.cmp(&y)));
        }
        Network { names, roles, links, out, radio_links }
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, node: usize) -> &str {
        &self.names[node]
    }

    pub fn role(&self, node: usize) -> Role {
        self.roles[node]
    }

    pub fn is_router(&self, node: usize) -> bool {
        self.roles[node] == Role::Router
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn links(&self) -> &[DirectedLink] {
        &self.links
    }

    pub fn link(&self, id: usize) -> &DirectedLink {
        &self.links[id]
    }

    pub fn radio_link_count(&self) -> usize {
        self.radio_links
    }

    pub fn out_links(&self, node: usize) -> &[usize] {
        &self.out[node]
    }

    /// Distinct neighbors of `node`, sorted by id.
    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.out[node].iter().map(|&l| self.links[l].to).collect();
        v.dedup();
        v
    }

    /// Directed links from `from` to `to` (parallel radios yield several).
    pub fn links_between(&self, from: usize, to: usize) -> impl Iterator<Item = usize> + '_ {
        self.out[from].iter().copied().filter(move |&l| self.links[l].to == to)
    }

    /// Whether `next` may carry a packet bound for `dst`: routers relay,
    /// compute hosts only terminate.
    pub fn can_relay_to(&self, next: usize, dst: usize) -> bool {
        next == dst || self.is_router(next)
    }

    pub fn link_label(&self, id: usize) -> String {
        let l = &self.links[id];
        format!("{}->{}", self.names[l.from], self.names[l.to])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_json() -> String {
        r#"{
            "seed": 1,
            "nodes": [
                {"id": "A", "role": "router", "position": [0, 0], "interfaces": [{"iface_id": "w0"}]},
                {"id": "B", "role": "router", "position": [10, 0], "interfaces": [{"iface_id": "w0"}, {"iface_id": "w1"}]},
                {"id": "C", "role": "router", "position": [20, 0], "interfaces": [{"iface_id": "w0"}]}
            ],
            "links": [["A", "w0", "B", "w0"], ["B", "w1", "C", "w0"]]
        }"#
        .to_string()
    }

    fn mutate(f: impl FnOnce(&mut Value)) -> Result<Topology, TopologyError> {
        let mut v: Value = serde_json::from_str(&chain_json()).unwrap();
        f(&mut v);
        parse_config(&v.to_string())
    }

    #[test]
    fn defaults_are_filled_in() {
        let t = parse_config(&chain_json()).unwrap();
        let r = &t.nodes[0].interfaces[0];
        assert_eq!(r.band, Band::Ghz5);
        assert_eq!(r.channel, 36);
        assert_eq!(r.width_mhz, 20);
        assert_eq!(r.tx_power_dbm, 15.0);
        assert_eq!(t.channel_model, ChannelModelConfig::default());
    }

    #[test]
    fn single_node_without_links() {
        let t = parse_config(r#"{"nodes": [{"id": "solo", "role": "router"}]}"#).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert!(t.links.is_empty());
    }

    #[test]
    fn schema_errors_name_the_json_path() {
        let err = mutate(|v| v["nodes"][1]["role"] = "rooter".into()).unwrap_err();
        match err {
            TopologyError::Schema { path, .. } => assert_eq!(path, "nodes[1].role"),
            other => panic!("unexpected {other:?}"),
        }
        let err = mutate(|v| {
            v["nodes"][0].as_object_mut().unwrap().remove("id");
        })
        .unwrap_err();
        assert!(matches!(err, TopologyError::Schema { ref path, .. } if path == "nodes[0]"), "{err}");
    }

    #[test]
    fn non_finite_position_rejected() {
        let mut topo = parse_config(&chain_json()).unwrap();
        topo.nodes[0].position = Some([f64::INFINITY, 0.0]);
        assert!(matches!(topo.validate(), Err(TopologyError::NonFinitePosition { node }) if node == "A"));
    }

    #[test]
    fn channel_mismatch_names_both_interfaces() {
        let err = mutate(|v| v["nodes"][1]["interfaces"][0]["channel"] = 40.into()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, TopologyError::ChannelMismatch { .. }));
        assert!(msg.contains("A/w0") && msg.contains("B/w0"), "{msg}");
    }

    // One mutation per declared invariant.
    #[test]
    fn mutation_suite() {
        let cases: Vec<(&str, Box<dyn FnOnce(&mut Value)>, fn(&TopologyError) -> bool)> = vec![
            ("duplicate id", Box::new(|v| v["nodes"][2]["id"] = "A".into()), |e| {
                matches!(e, TopologyError::DuplicateNode(n) if n == "A")
            }),
            (
                "non-numeric position",
                Box::new(|v| v["nodes"][0]["position"] = serde_json::json!([null, 0])),
                |e| matches!(e, TopologyError::Schema { path, .. } if path.starts_with("nodes[0].position")),
            ),
            ("bad 2.4 channel", Box::new(|v| {
                v["nodes"][0]["interfaces"][0]["band"] = "2.4GHz".into();
                v["nodes"][0]["interfaces"][0]["channel"] = 14.into();
            }), |e| matches!(e, TopologyError::InvalidChannel { channel: 14, .. })),
            ("bad 5 channel", Box::new(|v| v["nodes"][0]["interfaces"][0]["channel"] = 37.into()), |e| {
                matches!(e, TopologyError::InvalidChannel { channel: 37, .. })
            }),
            ("tx power", Box::new(|v| v["nodes"][0]["interfaces"][0]["tx_power_dbm"] = 31.0.into()), |e| {
                matches!(e, TopologyError::TxPowerOutOfRange { .. })
            }),
            ("unknown endpoint", Box::new(|v| v["links"][0][1] = "w9".into()), |e| {
                matches!(e, TopologyError::UnknownEndpoint { iface, .. } if iface == "w9")
            }),
            ("disconnected", Box::new(|v| {
                v["links"].as_array_mut().unwrap().pop();
            }), |e| matches!(e, TopologyError::DisconnectedMesh { components } if components.len() == 2)),
            ("duplicate link", Box::new(|v| {
                v["links"].as_array_mut().unwrap().push(serde_json::json!(["B", "w0", "A", "w0"]));
            }), |e| matches!(e, TopologyError::DuplicateLink { first: 0, .. })),
            ("worker without attachment", Box::new(|v| {
                v["nodes"].as_array_mut().unwrap().push(serde_json::json!({"id": "W", "role": "worker"}));
            }), |e| matches!(e, TopologyError::BadAttachment { .. })),
            ("worker attached to a worker", Box::new(|v| {
                let nodes = v["nodes"].as_array_mut().unwrap();
                nodes.push(serde_json::json!({"id": "W", "role": "worker", "attached_router": "A"}));
                nodes.push(serde_json::json!({"id": "W2", "role": "worker", "attached_router": "W"}));
            }), |e| matches!(e, TopologyError::BadAttachment { node, .. } if node == "W2")),
            ("missing position", Box::new(|v| {
                v["nodes"][2].as_object_mut().unwrap().remove("position");
            }), |e| matches!(e, TopologyError::MissingPosition { node, .. } if node == "C")),
            ("trace replay without trace", Box::new(|v| {
                v["channel_model"] = serde_json::json!({"name": "trace_replay"});
            }), |e| matches!(e, TopologyError::MissingTrace { .. })),
            ("bad exponent", Box::new(|v| {
                v["channel_model"] = serde_json::json!({"name": "log_distance", "exponent": 7.0});
            }), |e| matches!(e, TopologyError::ChannelModel(_))),
        ];
        for (name, m, check) in cases {
            let err = mutate(m).expect_err(name);
            assert!(check(&err), "{name}: got {err:?}");
        }
    }

    #[test]
    fn json_round_trip() {
        let t = parse_config(&chain_json()).unwrap();
        let again = parse_config(&t.to_json()).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn chain_adjacency() {
        let t = parse_config(&chain_json()).unwrap();
        let adj = build_adjacency(&t);
        let names = |n: &str| adj[n].iter().map(|a| a.neighbor.clone()).collect::<Vec<_>>();
        assert_eq!(names("A"), ["B"]);
        assert_eq!(names("B"), ["A", "C"]);
        assert_eq!(names("C"), ["B"]);
        assert_eq!(adj["B"][1].local_iface, "w1");
        assert_eq!(adj["B"][1].remote_iface, "w0");
    }

    #[test]
    fn network_attachment_links() {
        let mut v: Value = serde_json::from_str(&chain_json()).unwrap();
        v["nodes"]
            .as_array_mut()
            .unwrap()
            .push(serde_json::json!({"id": "agg", "role": "aggregator", "attached_router": "C"}));
        let t = parse_config(&v.to_string()).unwrap();
        let net = Network::new(&t);
        assert_eq!(net.links().len(), 6);
        let agg = net.index_of("agg").unwrap();
        let c = net.index_of("C").unwrap();
        assert_eq!(net.neighbors(agg), vec![c]);
        assert_eq!(net.link(4).kind, LinkKind::Attachment);
        assert!(net.can_relay_to(agg, agg));
        assert!(!net.can_relay_to(agg, c));
    }
}
