//! Policy-by-seed comparison runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, Context};
use meshfl_core::experiment::{run_experiment, Policy, RunOutput};
use meshfl_core::fl::round_durations;
use meshfl_core::scenario::Scenario;
use rayon::prelude::*;

use crate::artifacts::{write_file, write_run};
use crate::{load_scenario, Classify, CompareArgs, Failure};

const PLOT_SCRIPT: &str = r##"#!/usr/bin/env python3
# Plots the column-oriented files next to this script.
import glob, os
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
fig, (ax_round, ax_time, ax_rt) = plt.subplots(1, 3, figsize=(15, 4))
for path in sorted(glob.glob(os.path.join(here, "*_seed*.dat"))):
    label = os.path.basename(path)[:-4]
    rows = [l.split() for l in open(path) if not l.startswith("#")]
    rnd = [int(r[0]) for r in rows]
    t = [float(r[1]) for r in rows]
    loss = [float(r[2]) for r in rows]
    rt = [float(r[3]) for r in rows]
    ax_round.plot(rnd, loss, label=label)
    ax_time.plot(t, loss, label=label)
    ax_rt.plot(rnd, rt, label=label)
ax_round.set(xlabel="round", ylabel="global loss", yscale="log")
ax_time.set(xlabel="simulated time (s)", ylabel="global loss", yscale="log")
ax_rt.set(xlabel="round", ylabel="time per round (s)")
ax_rt.legend(fontsize="small")
fig.tight_layout()
fig.savefig(os.path.join(here, "compare.png"), dpi=150)
"##;

const KNOWN: [&str; 3] = ["shortest_path", "marl_online", "marl_frozen"];

type Cell = Result<RunOutput, String>;

fn run_cell(scenario: &Scenario, policy: &Policy, dir: &Path) -> Cell {
    let out = run_experiment(scenario, policy).map_err(|e| e.to_string())?;
    write_run(dir, scenario, &out, "compare").map_err(|e| format!("{e:#}"))?;
    Ok(out)
}

pub fn compare(a: CompareArgs) -> Result<(), Failure> {
    let base = load_scenario(&a.config, None, a.rounds)?;
    let seeds: Vec<u64> = match (a.seed, a.seeds.is_empty()) {
        (Some(s), _) => vec![s],
        (None, true) => vec![base.topology.seed],
        (None, false) => a.seeds.clone(),
    };
    for p in &a.policies {
        if !KNOWN.contains(&p.as_str()) {
            return Err(Failure::Invalid(anyhow!("unknown policy '{p}' (expected one of {})", KNOWN.join(", "))));
        }
    }
    if a.jobs == 0 {
        return Err(Failure::Invalid(anyhow!("--jobs must be >= 1")));
    }
    let wants = |p: &str| a.policies.iter().any(|x| x == p);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.jobs).build().runtime()?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("create {}", a.out.display())).runtime()?;
    let scenario_for = |seed: u64| base.clone().with_seed(seed);
    let dir_for = |policy: &str, seed: u64| a.out.join(policy).join(format!("seed_{seed}"));

    // Frozen runs load the same seed's online snapshot, so they go second.
    let mut first: Vec<(&str, u64)> = Vec::new();
    for &s in &seeds {
        for p in ["shortest_path", "marl_online"] {
            if wants(p) || (p == "marl_online" && wants("marl_frozen")) {
                first.push((p, s));
            }
        }
    }
    let phase1: Vec<((&str, u64), Cell)> = pool.install(|| {
        first
            .par_iter()
            .map(|&(p, s)| {
                let policy = if p == "shortest_path" { Policy::ShortestPath } else { Policy::MarlOnline };
                ((p, s), run_cell(&scenario_for(s), &policy, &dir_for(p, s)))
            })
            .collect()
    });
    let mut cells: BTreeMap<(&str, u64), Cell> = phase1.into_iter().collect();
    if wants("marl_frozen") {
        let phase2: Vec<((&str, u64), Cell)> = pool.install(|| {
            seeds
                .par_iter()
                .map(|&s| {
                    let cell = match &cells[&("marl_online", s)] {
                        Ok(online) => run_cell(&scenario_for(s), &Policy::MarlFrozen(online.snapshot.clone()), &dir_for("marl_frozen", s)),
                        Err(e) => Err(format!("no online snapshot: {e}")),
                    };
                    (("marl_frozen", s), cell)
                })
                .collect()
        });
        cells.extend(phase2);
    }

    let plot_dir = a.out.join("plot");
    std::fs::create_dir_all(&plot_dir).runtime()?;
    let mut summary = String::from("policy,seeds,completed,mean_time_per_round_s,var_time_per_round_s,mean_final_loss,missing\n");
    let mut failures = Vec::new();
    for p in KNOWN.iter().filter(|p| wants(p)) {
        let mut durations = Vec::new();
        let mut final_losses = Vec::new();
        let mut missing = Vec::new();
        for &s in &seeds {
            match &cells[&(*p, s)] {
                Ok(out) => {
                    let d = round_durations(&out.rounds);
                    let last = a.to_round.unwrap_or(d.len()).min(d.len());
                    let from = a.from_round.max(1);
                    if from <= last {
                        durations.extend_from_slice(&d[from - 1..last]);
                    }
                    final_losses.push(out.rounds.last().map_or(f64::NAN, |r| r.loss));
                    let mut dat = String::from("# round sim_time_s loss round_time_s\n");
                    for (r, dt) in out.rounds.iter().zip(&d) {
                        let _ = writeln!(dat, "{} {} {} {}", r.round, r.sim_time_s, r.loss, dt);
                    }
                    write_file(&plot_dir, &format!("{p}_seed{s}.dat"), dat.as_bytes()).runtime()?;
                }
                Err(e) => {
                    missing.push(s.to_string());
                    failures.push(format!("{p} seed {s}: {e}"));
                }
            }
        }
        let (mean, var) = mean_var(&durations);
        let loss = mean_var(&final_losses).0;
        let _ = writeln!(
            summary,
            "{p},{},{},{},{},{},{}",
            seeds.len(),
            seeds.len() - missing.len(),
            fmt_opt(mean),
            fmt_opt(var),
            fmt_opt(loss),
            missing.join(" ")
        );
    }
    write_file(&a.out, "summary.csv", summary.as_bytes()).runtime()?;
    write_file(&plot_dir, "plot.py", PLOT_SCRIPT.as_bytes()).runtime()?;
    print!("{summary}");
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(anyhow!("{} run(s) failed:\n  {}", failures.len(), failures.join("\n  "))))
    }
}

fn mean_var(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (Some(mean), Some(var))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}
