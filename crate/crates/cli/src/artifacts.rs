//! Run artifacts and their manifest.

use std::path::Path;

use anyhow::{Context, Result};
use meshfl_core::experiment::RunOutput;
use meshfl_core::fl::rounds_csv;
use meshfl_core::scenario::Scenario;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const RUN_FILES: [&str; 4] = ["rounds.csv", "delays.csv", "qtables.json", "events.jsonl"];

#[derive(Serialize)]
struct FileEntry {
    name: String,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    policy: &'a str,
    seed: u64,
    rounds: usize,
    q_updates: u64,
    q_skipped: u64,
    files: Vec<FileEntry>,
}

pub fn write_file(dir: &Path, name: &str, body: &[u8]) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, body).with_context(|| format!("write {}", path.display()))
}

pub fn sha256_hex(body: &[u8]) -> String {
    hex::encode(Sha256::digest(body))
}

/// Write every run artifact plus `manifest.json` into `dir`.
pub fn write_run(dir: &Path, scenario: &Scenario, out: &RunOutput, command: &str) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("create {}", dir.display()))?;
    let bodies: [(&str, String); 4] = [
        (RUN_FILES[0], rounds_csv(&out.rounds)),
        (RUN_FILES[1], out.delays_csv.clone()),
        (RUN_FILES[2], out.snapshot.to_json()),
        (RUN_FILES[3], out.events_jsonl.clone()),
    ];
    let mut files = Vec::new();
    for (name, body) in &bodies {
        write_file(dir, name, body.as_bytes())?;
        files.push(FileEntry { name: name.to_string(), bytes: body.len(), sha256: sha256_hex(body.as_bytes()) });
    }
    let manifest = Manifest {
        command,
        policy: out.policy,
        seed: scenario.topology.seed,
        rounds: out.rounds.len(),
        q_updates: out.q_counters.updates,
        q_skipped: out.q_counters.skipped,
        files,
    };
    write_file(dir, "manifest.json", serde_json::to_string_pretty(&manifest)?.as_bytes())
}
