//! Machine-readable run log: one JSON line per completed command.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub wall_time_s: f64,
    pub headline_metric: String,
    pub headline_value: f64,
}

pub fn append(out_dir: &Path, record: &RunRecord) -> std::io::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out_dir.join("runs.jsonl"))?;
    let line = serde_json::to_string(record).expect("record serializes");
    writeln!(file, "{line}")
}
