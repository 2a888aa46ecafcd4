//! Result files: per-experiment CSV and a JSON manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use plasticity_core::expanding::ResultRow;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{LabError, Result};

pub const RESULTS_HEADER: [&str; 7] = ["method", "seed", "experiment", "test_acc", "steps", "converged", "wall_ms"];

/// One experiment of one `(method, seed)` job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRow {
    pub method: String,
    pub seed: u64,
    pub row: ResultRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_test_acc: f64,
    pub average_test_acc: f64,
    pub total_steps: u64,
}

/// Final-experiment and across-experiment accuracy, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub final_test_acc: f64,
    pub average_test_acc: f64,
    pub mean_total_steps: f64,
    pub per_seed: Vec<SeedSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub versions: BTreeMap<String, String>,
    pub config: RunConfig,
    pub summary: Vec<MethodSummary>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig, summary: Vec<MethodSummary>) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            seed: config.seed,
            config_hash: config_hash(config)?,
            versions: versions(),
            config: config.clone(),
            summary,
        })
    }
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("plasticity-lab".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("plasticity-core".to_string(), plasticity_core::VERSION.to_string()),
    ])
}

/// SHA-256 of the config's JSON form, hex encoded.
pub fn config_hash(config: &RunConfig) -> Result<String> {
    let bytes = serde_json::to_vec(config).map_err(LabError::json("<config>"))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Groups rows by method, then seed, in row order.
pub fn summarize(rows: &[JobRow]) -> Vec<MethodSummary> {
    let mut jobs: BTreeMap<&str, BTreeMap<u64, Vec<&ResultRow>>> = BTreeMap::new();
    for r in rows {
        jobs.entry(&r.method).or_default().entry(r.seed).or_default().push(&r.row);
    }
    jobs.into_iter()
        .map(|(method, seeds)| {
            let per_seed: Vec<SeedSummary> = seeds
                .into_iter()
                .map(|(seed, rs)| SeedSummary {
                    seed,
                    final_test_acc: rs.last().map_or(f64::NAN, |r| r.test_accuracy),
                    average_test_acc: rs.iter().map(|r| r.test_accuracy).sum::<f64>() / rs.len() as f64,
                    total_steps: rs.iter().map(|r| r.steps).sum(),
                })
                .collect();
            let n = per_seed.len() as f64;
            MethodSummary {
                method: method.to_string(),
                final_test_acc: per_seed.iter().map(|s| s.final_test_acc).sum::<f64>() / n,
                average_test_acc: per_seed.iter().map(|s| s.average_test_acc).sum::<f64>() / n,
                mean_total_steps: per_seed.iter().map(|s| s.total_steps as f64).sum::<f64>() / n,
                per_seed,
            }
        })
        .collect()
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(LabError::io(dir))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(LabError::io(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(LabError::json(path))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(LabError::io(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.is_file() {
        return Err(LabError::MissingFile(path.to_path_buf()));
    }
    let file = File::open(path).map_err(LabError::io(path))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(LabError::json(path))
}

/// One JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(LabError::io(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(LabError::json(path))?;
        w.write_all(b"\n").map_err(LabError::io(path))?;
    }
    w.flush().map_err(LabError::io(path))
}

/// A CSV file with the given header and string records.
pub fn write_csv<I, R>(path: &Path, header: &[&str], records: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_path(path).map_err(LabError::csv(path))?;
    w.write_record(header).map_err(LabError::csv(path))?;
    for r in records {
        w.write_record(r).map_err(LabError::csv(path))?;
    }
    w.flush().map_err(LabError::io(path))
}

/// Writes `results.csv` and `manifest.json` into `dir`.
pub fn emit_results(dir: &Path, command: &str, rows: &[JobRow], config: &RunConfig) -> Result<(PathBuf, PathBuf)> {
    ensure_dir(dir)?;
    let csv_path = dir.join("results.csv");
    write_csv(
        &csv_path,
        &RESULTS_HEADER,
        rows.iter().map(|r| {
            [
                r.method.clone(),
                r.seed.to_string(),
                r.row.experiment.to_string(),
                r.row.test_accuracy.to_string(),
                r.row.steps.to_string(),
                r.row.converged.to_string(),
                r.row.wall_ms.to_string(),
            ]
        }),
    )?;
    let manifest_path = dir.join("manifest.json");
    write_json(&manifest_path, &Manifest::new(command, config, summarize(rows))?)?;
    Ok((csv_path, manifest_path))
}
