//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use meshfl_core::experiment::{build_engine, run_experiment, scheduler_timeline, Policy, RunOutput};
use meshfl_core::fixtures::{chain, fl_oracle, MCS4_SPACING_M};
use meshfl_core::fl::mean_round_time;
use meshfl_core::netsim::FlowStatus;
use meshfl_core::rng::SeedStreams;
use meshfl_core::routing::{q_update, softmax_probabilities, softmax_select, AgentState, QRouter, QRoutingConfig};
use meshfl_core::scenario::Scenario;
use meshfl_core::scheduler::{DirTraceSink, McsTable, Timeline, DEFAULT_MIN_SNR_DB, DEFAULT_RATE_MBPS};
use meshfl_core::topology::Network;
use rand::Rng;
use rayon::prelude::*;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenario(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn run(s: &Scenario, p: &Policy) -> RunOutput {
    run_experiment(s, p).unwrap_or_else(|e| panic!("{} run failed: {e}", p.label()))
}

fn loss_bits(o: &RunOutput) -> Vec<u64> {
    o.rounds.iter().map(|r| r.loss.to_bits()).collect()
}

fn c1_routing_invariant_convergence() -> Check {
    let s = scenario("testbed10.json").with_rounds(20);
    let sp = run(&s, &Policy::ShortestPath);
    let online = run(&s, &Policy::MarlOnline);
    let frozen = run(&s, &Policy::MarlFrozen(online.snapshot.clone()));
    ensure(sp.rounds.len() == 20, || format!("{} rounds", sp.rounds.len()))?;
    ensure(loss_bits(&sp) == loss_bits(&online), || "shortest_path vs marl_online loss differs".into())?;
    ensure(loss_bits(&sp) == loss_bits(&frozen), || "shortest_path vs marl_frozen loss differs".into())?;
    let t = |o: &RunOutput| o.rounds.last().unwrap().sim_time_s;
    Ok(format!(
        "20 identical losses, final {:.6e}; sim time sp {:.0} s, online {:.0} s, frozen {:.0} s",
        sp.rounds.last().unwrap().loss,
        t(&sp),
        t(&online),
        t(&frozen)
    ))
}

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const WINDOW: (usize, usize) = (20, 50);

struct Congested {
    sp: Vec<f64>,
    online: Vec<RunOutput>,
}

/// Shortest-path and online runs on the congested scenario, shared by
/// criteria 2 and 3.
fn congested() -> &'static Congested {
    static CELL: OnceLock<Congested> = OnceLock::new();
    CELL.get_or_init(|| {
        let base = scenario("congested.json");
        let cells: Vec<(f64, RunOutput)> = SEEDS
            .par_iter()
            .map(|&seed| {
                let s = base.clone().with_seed(seed);
                let sp = run(&s, &Policy::ShortestPath);
                let online = run(&s, &Policy::MarlOnline);
                (window_mean(&sp), online)
            })
            .collect();
        let (sp, online) = cells.into_iter().unzip();
        Congested { sp, online }
    })
}

fn window_mean(o: &RunOutput) -> f64 {
    assert_eq!(o.rounds.len(), WINDOW.1, "{} completed {} rounds", o.policy, o.rounds.len());
    mean_round_time(&o.rounds, WINDOW.0, WINDOW.1).expect("window inside the run")
}

fn c2_marl_wallclock_benefit() -> Check {
    let c = congested();
    let online: Vec<f64> = c.online.iter().map(window_mean).collect();
    let wins = online.iter().zip(&c.sp).filter(|(o, s)| o < s).count();
    let table: Vec<String> =
        SEEDS.iter().zip(online.iter().zip(&c.sp)).map(|(seed, (o, s))| format!("seed {seed}: {o:.1} vs {s:.1}")).collect();
    let detail = format!("online < sp on {wins}/5 seeds, mean s/round [{}]", table.join("; "));
    ensure(wins >= 4, || detail.clone())?;
    Ok(detail)
}

fn c3_frozen_transfer_gap() -> Check {
    let c = congested();
    let base = scenario("congested.json");
    let frozen: Vec<RunOutput> = SEEDS
        .par_iter()
        .zip(&c.online)
        .map(|(&seed, online)| run(&base.clone().with_seed(seed), &Policy::MarlFrozen(online.snapshot.clone())))
        .collect();
    let mut gaps = Vec::new();
    for ((seed, f), o) in SEEDS.iter().zip(&frozen).zip(&c.online) {
        ensure(f.q_counters.updates == 0, || format!("seed {seed}: {} Q updates while frozen", f.q_counters.updates))?;
        ensure(f.snapshot.fingerprint() == o.snapshot.fingerprint(), || format!("seed {seed}: tables changed"))?;
        let (fm, om) = (window_mean(f), window_mean(o));
        gaps.push((*seed, fm, om, (fm - om).abs() / om));
    }
    let pooled_f = gaps.iter().map(|g| g.1).sum::<f64>() / 5.0;
    let pooled_o = gaps.iter().map(|g| g.2).sum::<f64>() / 5.0;
    let pooled = (pooled_f - pooled_o).abs() / pooled_o;
    let worst = gaps.iter().map(|g| g.3).fold(0.0, f64::max);
    let per_seed: Vec<String> = gaps.iter().map(|(s, f, o, g)| format!("seed {s}: {f:.1}/{o:.1} ({:.1}%)", g * 100.0)).collect();
    let detail = format!(
        "0 Q updates; frozen/online s/round [{}]; worst gap {:.1}%, pooled gap {:.1}%",
        per_seed.join("; "),
        worst * 100.0,
        pooled * 100.0
    );
    ensure(worst <= 0.15 && pooled <= 0.15, || detail.clone())?;
    Ok(detail)
}

fn mcs_rates(t: &Timeline) -> Vec<(f64, usize, i32, u64)> {
    t.ticks
        .iter()
        .flat_map(|k| k.states.iter().map(move |s| (k.t, s.link, s.mcs_index, s.effective_rate_mbps.to_bits())))
        .collect()
}

fn c4_trace_round_trip() -> Check {
    let mut total = 0;
    for name in ["testbed10.json", "congested.json"] {
        let s = scenario(name);
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut sink = DirTraceSink::new(dir.path());
        let generated = scheduler_timeline(&s, 500.0, Some(&mut sink)).map_err(|e| e.to_string())?;
        sink.finish().map_err(|e| e.to_string())?;
        let replayed = scheduler_timeline(&s.with_trace_dir(dir.path()).map_err(|e| e.to_string())?, 500.0, None)
            .map_err(|e| e.to_string())?;
        let (g, r) = (mcs_rates(&generated), mcs_rates(&replayed));
        ensure(g.len() == r.len(), || format!("{name}: {} vs {} states", g.len(), r.len()))?;
        if let Some(i) = (0..g.len()).find(|&i| g[i] != r[i]) {
            return Err(format!("{name}: first mismatch at t={} link {}: {:?} vs {:?}", g[i].0, g[i].1, g[i], r[i]));
        }
        total += g.len();
    }
    Ok(format!("{total} (tick, link) states identical over 500 s on both scenarios"))
}

fn c5_scheduler_arithmetic() -> Check {
    let t = McsTable::default();
    for i in 0..9 {
        let snr = DEFAULT_MIN_SNR_DB[i];
        ensure(t.select_mcs(snr) == i as i32, || format!("select_mcs({snr})"))?;
        ensure(t.select_mcs(snr - 1e-9) == i as i32 - 1, || format!("select_mcs just below {snr}"))?;
        let rate = t.rate_for_mcs(i as i32).map_err(|e| e.to_string())?;
        ensure(rate == DEFAULT_RATE_MBPS[i], || format!("rate_for_mcs({i}) = {rate}"))?;
    }
    ensure(t.select_mcs(4.999) == -1, || "below MCS0".into())?;
    ensure(matches!(t.rate_for_mcs(-1), Ok(r) if r == 0.0), || "rate_for_mcs(-1)".into())?;

    let s = chain(2, MCS4_SPACING_M).map_err(|e| e.to_string())?;
    let mut e = build_engine(&s, &Policy::ShortestPath).map_err(|e| e.to_string())?;
    let f = e.start_flow(0, 1, 5_800_000, 0.0, false, 0).map_err(|e| e.to_string())?;
    while e.next_notification().map_err(|e| e.to_string())?.is_some() {}
    ensure(e.flow(f).ok().map(|x| x.status) == Some(FlowStatus::Complete), || "transfer incomplete".into())?;
    let d = e.end_to_end_delay(f).map_err(|e| e.to_string())?;
    ensure((d - 1.190).abs() <= 0.01 * 1.190, || format!("5.8 MB at MCS 4 took {d} s"))?;
    Ok(format!("9 rows and -1 exact; 5.8 MB single hop at MCS 4 in {d:.6} s"))
}

fn c6_fl_oracle() -> Check {
    let out = run(&fl_oracle(20).map_err(|e| e.to_string())?, &Policy::ShortestPath);
    ensure(out.rounds.len() == 20, || format!("{} rounds", out.rounds.len()))?;
    let contraction = 0.9f64.powi(10);
    let mut w = 0.0;
    let mut worst = 0.0f64;
    for r in &out.rounds {
        w = 1.0 + contraction * (w - 1.0);
        worst = worst.max((r.model[0] - w).abs());
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    Ok(format!("20 rounds, max |w - w_closed| = {worst:.1e}"))
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_meshfl")
}

fn meshfl(args: &[&str]) -> Result<(), String> {
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("meshfl {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn first_difference(a: &BTreeMap<PathBuf, Vec<u8>>, b: &BTreeMap<PathBuf, Vec<u8>>) -> Option<String> {
    if a.keys().ne(b.keys()) {
        return Some("different file sets".into());
    }
    a.iter().find(|(k, v)| b[*k] != **v).map(|(k, _)| k.display().to_string())
}

fn c7_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let testbed = cfg.join("testbed10.json");
    let congested = cfg.join("congested.json");
    let p = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    let tb = testbed.to_string_lossy();
    for dir in ["a", "b"] {
        meshfl(&["run", "--config", &tb, "--out", &p(dir), "--policy", "marl_online", "--rounds", "20"])?;
    }
    let (a, b) = (tree(&tmp.path().join("a")), tree(&tmp.path().join("b")));
    for f in ["rounds.csv", "delays.csv", "qtables.json"] {
        ensure(a.contains_key(Path::new(f)), || format!("run wrote no {f}"))?;
    }
    if let Some(d) = first_difference(&a, &b) {
        return Err(format!("run artifacts differ: {d}"));
    }
    let cg = congested.to_string_lossy();
    for (dir, jobs) in [("j1", "1"), ("j4", "4")] {
        meshfl(&["compare", "--config", &cg, "--out", &p(dir), "--seeds", "1,2", "--rounds", "10", "--jobs", jobs])?;
    }
    let (j1, j4) = (tree(&tmp.path().join("j1")), tree(&tmp.path().join("j4")));
    if let Some(d) = first_difference(&j1, &j4) {
        return Err(format!("compare --jobs 1 vs 4 differ: {d}"));
    }
    Ok(format!("run x2: {} files identical; compare jobs 1 vs 4: {} files identical", a.len(), j1.len()))
}

fn two_path() -> (Network, usize, usize, usize, usize) {
    let v = serde_json::json!({
        "channel_model": {"name": "log_distance"},
        "interference_model": {"name": "none"},
        "nodes": [
            {"id": "S", "role": "router", "position": [0, 0], "interfaces": [{"iface_id": "f"}, {"iface_id": "l"}]},
            {"id": "F", "role": "router", "position": [10, 5], "interfaces": [{"iface_id": "a"}, {"iface_id": "b"}]},
            {"id": "L", "role": "router", "position": [10, -5], "interfaces": [{"iface_id": "a"}, {"iface_id": "b"}]},
            {"id": "D", "role": "router", "position": [20, 0], "interfaces": [{"iface_id": "f"}, {"iface_id": "l"}]}
        ],
        "links": [["S", "f", "F", "a"], ["S", "l", "L", "a"], ["F", "b", "D", "f"], ["L", "b", "D", "l"]]
    });
    let s = Scenario::from_value(v, Path::new(".")).unwrap();
    let net = Network::new(&s.topology);
    let i = |n: &str| net.index_of(n).unwrap();
    let ids = (i("S"), i("F"), i("L"), i("D"));
    (net, ids.0, ids.1, ids.2, ids.3)
}

fn frequencies(q: &[(usize, f64)], tau: f64, rng: &mut meshfl_core::rng::SimRng) -> Result<Vec<f64>, String> {
    const N: usize = 100_000;
    let mut counts = vec![0usize; q.len()];
    for _ in 0..N {
        counts[softmax_select(q, tau, rng).map_err(|e| e.to_string())?] += 1;
    }
    Ok(counts.iter().map(|&c| c as f64 / N as f64).collect())
}

fn c8_rl_properties() -> Check {
    let streams = SeedStreams::new(2024);
    let mut rng = streams.stream("acceptance/softmax");
    let mut worst_sum = 0.0f64;
    for _ in 0..10_000 {
        let n = rng.random_range(1..16);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-500.0..0.0)).collect();
        let tau = 10f64.powf(rng.random_range(-3.0..3.0));
        worst_sum = worst_sum.max((softmax_probabilities(&values, tau).iter().sum::<f64>() - 1.0).abs());
    }
    ensure(worst_sum <= 1e-12, || format!("softmax sum off by {worst_sum:e}"))?;

    let q = [(0, -1.0), (1, -1.2), (2, -1.5)];
    let cold = frequencies(&q, 0.01, &mut rng)?;
    ensure(cold[0] > 0.98, || format!("tau 0.01 argmax frequency {}", cold[0]))?;
    let hot = frequencies(&q, 100.0, &mut rng)?;
    let hot_dev = hot.iter().map(|p| (p - 1.0 / 3.0).abs()).fold(0.0, f64::max);
    ensure(hot_dev <= 0.02, || format!("tau 100 deviation {hot_dev}"))?;

    ensure(q_update(-2.0, -0.5, Some(-1.0), 0.5, 1.0) == -1.75, || "SARSA example 1".into())?;
    ensure(q_update(0.0, -0.3, None, 1.0, 1.0) == -0.3, || "SARSA example 2".into())?;
    ensure(q_update(-0.7, -0.4, Some(-2.0), 0.0, 1.0) == -0.7, || "SARSA example 3".into())?;

    let s = scenario("testbed10.json").with_rounds(5);
    let online = run(&s, &Policy::MarlOnline);
    let frozen = run(&s, &Policy::MarlFrozen(online.snapshot.clone()));
    let before = online.snapshot.fingerprint();
    ensure(frozen.initial_fingerprint == before && frozen.snapshot.fingerprint() == before, || "frozen hash changed".into())?;
    ensure(frozen.q_counters.updates == 0 && frozen.q_counters.skipped == frozen.q_counters.reward_events, || {
        format!("frozen counters {:?}", frozen.q_counters)
    })?;

    let (net, src, fast, slow, dst) = two_path();
    let up = vec![true; net.links().len()];
    let mut router = QRouter::new(&net, QRoutingConfig::default(), &streams);
    let state = AgentState { src, dst };
    for _ in 0..1000 {
        let a = router.select(&net, &up, src, state).ok_or("no action")?;
        let delay = if a == fast { 0.002 } else { 0.020 };
        router.on_reward(src, state, a, delay, 0.0, None).map_err(|e| e.to_string())?;
    }
    let (qf, qs) = (router.q_value(src, state, fast), router.q_value(src, state, slow));
    ensure(qf > qs, || format!("fast {qf} <= slow {qs}"))?;

    Ok(format!(
        "softmax max |sum-1| {worst_sum:.1e}; tau 0.01 argmax {:.4}; tau 100 max dev {hot_dev:.4}; SARSA 3/3; \
         frozen hash stable over {} reward events; Q fast {qf:.4} > slow {qs:.4}",
        cold[0], frozen.q_counters.reward_events
    ))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    check: fn() -> Check,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "routing-invariant convergence", budget: Duration::from_secs(60), check: c1_routing_invariant_convergence },
        Criterion { id: 2, name: "MARL wall-clock benefit", budget: Duration::from_secs(300), check: c2_marl_wallclock_benefit },
        Criterion { id: 3, name: "frozen transfer gap", budget: Duration::from_secs(300), check: c3_frozen_transfer_gap },
        Criterion { id: 4, name: "trace round trip", budget: Duration::from_secs(30), check: c4_trace_round_trip },
        Criterion { id: 5, name: "scheduler arithmetic", budget: Duration::from_secs(1), check: c5_scheduler_arithmetic },
        Criterion { id: 6, name: "FL oracle", budget: Duration::from_secs(1), check: c6_fl_oracle },
        Criterion { id: 7, name: "determinism", budget: Duration::from_secs(120), check: c7_determinism },
        Criterion { id: 8, name: "RL property suite", budget: Duration::from_secs(30), check: c8_rl_properties },
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(d) if elapsed > c.budget => Err(format!("{d}; over the {:?} budget", c.budget)),
            r => r,
        };
        match result {
            Ok(d) => println!("criterion {} {}: PASS ({:.2} s) {d}", c.id, c.name, elapsed.as_secs_f64()),
            Err(d) => {
                failed += 1;
                println!("criterion {} {}: FAIL ({:.2} s) {d}", c.id, c.name, elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
