//! Minimum-hop routing over currently-up links.

use std::collections::{BTreeMap, VecDeque};

use super::RoutingError;
use crate::topology::Network;

/// Hop distances to one destination; `None` for nodes that cannot reach it.
///
/// Compute hosts never relay, so the backward search only expands routers
/// (and the destination itself).
pub fn hop_distances(net: &Network, up: &[bool], dst: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; net.node_count()];
    dist[dst] = Some(0);
    let mut queue = VecDeque::from([dst]);
    // Reverse adjacency over up links.
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); net.node_count()];
    for l in net.links() {
        if up[l.id] {
            preds[l.to].push(l.from);
        }
    }
    while let Some(x) = queue.pop_front() {
        if x != dst && !net.is_router(x) {
            continue;
        }
        let d = dist[x].unwrap();
        for &p in &preds[x] {
            if dist[p].is_none() {
                dist[p] = Some(d + 1);
                queue.push_back(p);
            }
        }
    }
    dist
}

/// Next hop from `node` toward `dst` on a minimum-hop path over up links.
/// Ties go to the lexicographically smallest neighbor id.
pub fn shortest_path_next_hop(net: &Network, up: &[bool], node: usize, dst: usize) -> Result<usize, RoutingError> {
    let dist = hop_distances(net, up, dst);
    next_hop_from_distances(net, up, &dist, node, dst)
}

fn next_hop_from_distances(
    net: &Network,
    up: &[bool],
    dist: &[Option<u32>],
    node: usize,
    dst: usize,
) -> Result<usize, RoutingError> {
    let mut best: Option<(u32, usize)> = None;
    // out_links are sorted by neighbor id, so the first minimum wins ties.
    for &l in net.out_links(node) {
        let n = net.link(l).to;
        if !up[l] || !net.can_relay_to(n, dst) {
            continue;
        }
        if let Some(d) = dist[n] {
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, n));
            }
        }
    }
    best.map(|(_, n)| n).ok_or_else(|| RoutingError::NoRoute {
        node: net.name(node).to_string(),
        dst: net.name(dst).to_string(),
    })
}

/// Shortest-path router with per-destination distance caching. The cache is
/// dropped whenever link availability changes.
#[derive(Debug, Default, Clone)]
pub struct ShortestPath {
    cache: BTreeMap<usize, Vec<Option<u32>>>,
}

impl ShortestPath {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn invalidate(&mut self) {
        self.cache.clear();
    }

    pub fn next_hop(&mut self, net: &Network, up: &[bool], node: usize, dst: usize) -> Result<usize, RoutingError> {
        let dist = self.cache.entry(dst).or_insert_with(|| hop_distances(net, up, dst));
        next_hop_from_distances(net, up, dist, node, dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::parse_config;

    fn net(nodes: &[&str], links: &[(&str, &str)]) -> Network {
        let mut ifaces: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        let mut link_json = Vec::new();
        for (a, b) in links {
            let ia = format!("w{}", ifaces.entry(a).or_default().len());
            ifaces.get_mut(a).unwrap().push(ia.clone());
            let ib = format!("w{}", ifaces.entry(b).or_default().len());
            ifaces.get_mut(b).unwrap().push(ib.clone());
            link_json.push(serde_json::json!([a, ia, b, ib]));
        }
        let nodes_json: Vec<_> = nodes
            .iter()
            .map(|n| {
                let ifs: Vec<_> = ifaces.get(n).cloned().unwrap_or_default().into_iter().map(|i| serde_json::json!({"iface_id": i})).collect();
                serde_json::json!({"id": n, "role": "router", "interfaces": ifs})
            })
            .collect();
        let doc = serde_json::json!({
            "channel_model": {"name": "trace_replay"},
            "nodes": nodes_json,
            "links": link_json,
        });
        // Trace files are irrelevant for graph tests; attach placeholders.
        let mut doc = doc;
        for n in doc["nodes"].as_array_mut().unwrap() {
            for i in n["interfaces"].as_array_mut().unwrap() {
                i["trace_file"] = "x.csv".into();
            }
        }
        Network::new(&parse_config(&doc.to_string()).unwrap())
    }

    #[test]
    fn chain() {
        let n = net(&["A", "B", "C"], &[("A", "B"), ("B", "C")]);
        let up = vec![true; n.links().len()];
        let (a, b, c) = (0, 1, 2);
        assert_eq!(shortest_path_next_hop(&n, &up, a, c).unwrap(), b);
        assert_eq!(shortest_path_next_hop(&n, &up, c, a).unwrap(), b);
    }

    #[test]
    fn square_tie_breaks_by_id() {
        let n = net(&["A", "D", "C", "B"], &[("A", "D"), ("D", "C"), ("A", "B"), ("B", "C")]);
        let up = vec![true; n.links().len()];
        let a = n.index_of("A").unwrap();
        let c = n.index_of("C").unwrap();
        assert_eq!(n.name(shortest_path_next_hop(&n, &up, a, c).unwrap()), "B");
    }

    #[test]
    fn down_link_disconnects() {
        let n = net(&["A", "B", "C"], &[("A", "B"), ("B", "C")]);
        let mut up = vec![true; n.links().len()];
        up[2] = false; // B -> C
        assert!(matches!(shortest_path_next_hop(&n, &up, 0, 2), Err(RoutingError::NoRoute { .. })));
    }

    #[test]
    fn cached_matches_uncached() {
        let n = net(&["A", "B", "C", "D"], &[("A", "B"), ("B", "C"), ("C", "D"), ("A", "D")]);
        let up = vec![true; n.links().len()];
        let mut sp = ShortestPath::new();
        for s in 0..4 {
            for d in 0..4 {
                if s != d {
                    assert_eq!(sp.next_hop(&n, &up, s, d).unwrap(), shortest_path_next_hop(&n, &up, s, d).unwrap());
                }
            }
        }
    }
}
