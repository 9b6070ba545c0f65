use std::path::{Path, PathBuf};

use meshfl_core::experiment::scheduler_timeline;
use meshfl_core::scenario::Scenario;
use meshfl_core::scheduler::{DirTraceSink, SchedulerWarning, Timeline};
use meshfl_core::topology::Network;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn mcs_rates(t: &Timeline) -> Vec<(i32, u64)> {
    t.ticks.iter().flat_map(|k| k.states.iter().map(|s| (s.mcs_index, s.effective_rate_mbps.to_bits()))).collect()
}

#[test]
fn generate_then_replay_reproduces_timeline() {
    let s = Scenario::load(&scenarios().join("testbed10.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut sink = DirTraceSink::new(dir.path());
    let generated = scheduler_timeline(&s, 50.0, Some(&mut sink)).unwrap();
    let files = sink.finish().unwrap();
    let net = Network::new(&s.topology);
    // One file per interface end of every radio link.
    assert_eq!(files.len(), 2 * net.radio_link_count());
    for f in &files {
        let rows = std::fs::read_to_string(f).unwrap().lines().count();
        assert_eq!(rows, 1 + 11, "{}", f.display());
    }
    assert_eq!(generated.ticks.len(), 11);

    let replay = s.clone().with_trace_dir(dir.path()).unwrap();
    let replayed = scheduler_timeline(&replay, 50.0, None).unwrap();
    assert_eq!(mcs_rates(&generated), mcs_rates(&replayed));
    assert!(replayed.ticks.iter().all(|t| t.warnings.is_empty()));

    // Replay consumes no randomness.
    let reseeded = s.with_trace_dir(dir.path()).unwrap().with_seed(999);
    assert_eq!(mcs_rates(&scheduler_timeline(&reseeded, 50.0, None).unwrap()), mcs_rates(&replayed));
}

#[test]
fn replay_past_end_holds_and_warns() {
    let s = Scenario::load(&scenarios().join("testbed10.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut sink = DirTraceSink::new(dir.path());
    let generated = scheduler_timeline(&s, 20.0, Some(&mut sink)).unwrap();
    sink.finish().unwrap();
    let replayed = scheduler_timeline(&s.with_trace_dir(dir.path()).unwrap(), 30.0, None).unwrap();
    let last = generated.ticks.last().unwrap();
    // Warned once per interface, at the first tick past the end.
    assert_eq!(replayed.ticks[5].warnings.len(), 26);
    assert!(replayed.ticks[5].warnings.iter().all(|w| matches!(w, SchedulerWarning::TraceExhausted { t, .. } if *t == 25.0)));
    assert!(replayed.ticks[6].warnings.is_empty());
    for tick in &replayed.ticks[5..] {
        let held: Vec<i32> = tick.states.iter().map(|s| s.mcs_index).collect();
        assert_eq!(held, last.states.iter().map(|s| s.mcs_index).collect::<Vec<_>>());
    }
    assert!(replayed.ticks[..5].iter().all(|t| t.warnings.is_empty()));
}

#[test]
fn mixed_mode_bottleneck_follows_trace() {
    let s = Scenario::load(&scenarios().join("congested.json")).unwrap();
    let net = Network::new(&s.topology);
    let tl = scheduler_timeline(&s, 30.0, None).unwrap();
    let (r2, r3) = (net.index_of("R2").unwrap(), net.index_of("R3").unwrap());
    let slow: Vec<usize> = net.links_between(r2, r3).chain(net.links_between(r3, r2)).collect();
    assert_eq!(slow.len(), 2);
    for tick in &tl.ticks {
        for st in tick.states.iter().filter(|st| slow.contains(&st.link)) {
            let expected = if tick.t < 10.0 { 8 } else { 0 };
            assert_eq!(st.mcs_index, expected, "t={} link {}", tick.t, net.link_label(st.link));
        }
    }
    // Analytic links stay fast.
    let other = tl.ticks[3].states.iter().filter(|st| !slow.contains(&st.link));
    assert!(other.clone().all(|st| st.mcs_index >= 2), "{:?}", other.map(|s| s.mcs_index).collect::<Vec<_>>());
}
