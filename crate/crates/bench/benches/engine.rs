use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, Criterion};
use meshfl_core::experiment::{build_engine, run_experiment, scheduler_timeline, Policy};
use meshfl_core::fixtures::{chain, fl_oracle, MCS4_SPACING_M};
use meshfl_core::rng::SeedStreams;
use meshfl_core::routing::softmax_select;
use meshfl_core::scenario::Scenario;

fn testbed() -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/testbed10.json");
    Scenario::load(&path).expect("shipped scenario")
}

fn scheduler(c: &mut Criterion) {
    let s = testbed();
    c.bench_function("scheduler/testbed10_300s", |b| b.iter(|| scheduler_timeline(black_box(&s), 300.0, None).unwrap()));
}

fn softmax(c: &mut Criterion) {
    let q: Vec<(usize, f64)> = (0..4).map(|i| (i, -0.01 * i as f64)).collect();
    let mut rng = SeedStreams::new(1).stream("bench");
    c.bench_function("softmax_select/4", |b| b.iter(|| softmax_select(black_box(&q), 0.3, &mut rng).unwrap()));
}

fn transfer(c: &mut Criterion) {
    let s = chain(4, MCS4_SPACING_M).unwrap();
    c.bench_function("engine/5.8MB_3hop", |b| {
        b.iter(|| {
            let mut e = build_engine(&s, &Policy::ShortestPath).unwrap();
            e.start_flow(0, 3, 5_800_000, 0.0, false, 0).unwrap();
            while e.next_notification().unwrap().is_some() {}
            e.stats().delivered
        })
    });
}

fn fl(c: &mut Criterion) {
    let oracle = fl_oracle(5).unwrap();
    c.bench_function("fl/oracle_5_rounds", |b| b.iter(|| run_experiment(&oracle, &Policy::ShortestPath).unwrap()));
    let s = testbed().with_rounds(2);
    let mut g = c.benchmark_group("fl/testbed10_2_rounds");
    g.sample_size(10);
    for p in [Policy::ShortestPath, Policy::MarlOnline] {
        g.bench_function(p.label(), |b| b.iter(|| run_experiment(&s, &p).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, scheduler, softmax, transfer, fl);
criterion_main!(benches);
