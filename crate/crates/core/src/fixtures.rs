//! Small canned scenarios for tests, benchmarks and examples.
//!
//! Chains use the deterministic log-distance model with default parameters
//! (15 dBm, 40 dB at 1 m, exponent 3, -91 dBm noise floor), where the SNR at
//! distance `d` is `66 - 30 log10(d)` dB.

use std::path::Path;

use serde_json::{json, Value};

use crate::scenario::{Scenario, ScenarioError};

/// Router spacing that lands every chain link on MCS 4 (39 Mbps).
pub const MCS4_SPACING_M: f64 = 34.0;

/// Routers `R1..=Rn` on a line, `spacing_m` apart, one radio per link end,
/// no interference. Extra hosts attach via `(id, role, router)` triples.
pub fn chain_value(n_routers: usize, spacing_m: f64, hosts: &[(&str, &str, &str)]) -> Value {
    let mut nodes = Vec::new();
    for i in 1..=n_routers {
        let mut ifaces = Vec::new();
        if i > 1 {
            ifaces.push(json!({"iface_id": "left"}));
        }
        if i < n_routers {
            ifaces.push(json!({"iface_id": "right"}));
        }
        nodes.push(json!({
            "id": format!("R{i}"),
            "role": "router",
            "position": [(i - 1) as f64 * spacing_m, 0.0],
            "interfaces": ifaces,
        }));
    }
    for (id, role, router) in hosts {
        nodes.push(json!({"id": id, "role": role, "position": [0.0, 1.0], "interfaces": [], "attached_router": router}));
    }
    let links: Vec<Value> = (1..n_routers).map(|i| json!([format!("R{i}"), "right", format!("R{}", i + 1), "left"])).collect();
    json!({
        "seed": 1,
        "nodes": nodes,
        "links": links,
        "channel_model": {"name": "log_distance"},
        "interference_model": {"name": "none"},
    })
}

pub fn chain(n_routers: usize, spacing_m: f64) -> Result<Scenario, ScenarioError> {
    Scenario::from_value(chain_value(n_routers, spacing_m, &[]), Path::new("."))
}

/// Two workers with scalar objectives centred at 0 and 2, no gradient noise,
/// eta 0.1, H 10, uniform FedAvg, starting from w = 0.
pub fn fl_oracle(rounds: usize) -> Result<Scenario, ScenarioError> {
    let mut v = chain_value(2, MCS4_SPACING_M, &[("W1", "worker", "R1"), ("W2", "worker", "R1"), ("S", "aggregator", "R2")]);
    v["fl"] = json!({
        "rounds": rounds,
        "local_iters": 10,
        "learning_rate": 0.1,
        "batch_noise_sigma": 0.0,
        "dim": 1,
        "aggregation": "uniform",
        "centers": {"W1": [0.0], "W2": [2.0]},
        "model_size_bytes": 580000,
    });
    v["netsim"] = json!({"chunk_size_bytes": 15000});
    Scenario::from_value(v, Path::new("."))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::McsTable;

    #[test]
    fn mcs4_spacing_hits_mcs4() {
        let snr = 66.0 - 30.0 * MCS4_SPACING_M.log10();
        assert_eq!(McsTable::default().select_mcs(snr), 4);
        assert!(snr > 5.0 + 3.0, "above the loss ramp");
    }

    #[test]
    fn fixtures_validate() {
        chain(3, MCS4_SPACING_M).unwrap();
        fl_oracle(2).unwrap();
    }
}
