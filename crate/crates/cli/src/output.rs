//! Artifact writers. Payload files embed the config hash and seed and are
//! byte-identical across reruns; wall-clock data lives only in the trace
//! CSV and the metadata file.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;
use t4s_core::fit::StageRecord;

pub fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    fs::write(dir.join(name), content).map_err(|e| e.to_string())
}

pub fn write_trace_csv(
    dir: &Path,
    hash: &str,
    seed: u64,
    stages: &[StageRecord],
) -> Result<(), String> {
    let mut rows = vec![
        format!("# config_hash={hash} seed={seed}"),
        "stage,tucker,tt,manifold_dim,train_loss,val_error,wall_time".into(),
    ];
    for s in stages {
        rows.push(format!(
            "{},{},{},{},{:.16e},{:.16e},{:.6}",
            s.stage,
            join_ranks(&s.tucker),
            join_ranks(&s.tt),
            s.manifold_dim,
            s.train_loss,
            s.val_error,
            s.wall_secs
        ));
    }
    write_file(dir, "trace.csv", &format!("{}\n", rows.join("\n")))
}

fn join_ranks(r: &[usize]) -> String {
    r.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

pub fn write_meta(dir: &Path, hash: &str, seed: u64) -> Result<(), String> {
    let unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = json!({
        "config_hash": hash,
        "seed": seed,
        "finished_unix_seconds": unix,
    });
    write_file(
        dir,
        "meta.json",
        &format!("{}\n", serde_json::to_string_pretty(&meta).unwrap()),
    )
}
