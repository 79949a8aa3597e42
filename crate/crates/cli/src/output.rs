//! CSV and metadata writers.
//!
//! Every CSV starts with a `# config_sha256=<hex> seed=<n>` comment line,
//! then a header row. Files are written to a temporary sibling and renamed
//! into place, so an interrupted run never leaves a truncated result.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(cfg.canonical_json().as_bytes()))
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// In-memory CSV table.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self, hash: &str, seed: u64) -> Vec<u8> {
        let mut buf = format!("# config_sha256={hash} seed={seed}\n").into_bytes();
        {
            let mut w = csv::WriterBuilder::new().from_writer(&mut buf);
            w.write_record(&self.header).expect("in-memory write");
            for r in &self.rows {
                w.write_record(r).expect("in-memory write");
            }
            w.flush().expect("in-memory write");
        }
        buf
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

#[derive(Serialize)]
struct Metadata<'a, E: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_sha256: &'a str,
    seed: u64,
    threads: usize,
    csv: String,
    rows: usize,
    config: &'a ExperimentConfig,
    details: E,
}

/// Writes `<stem>.csv` and `<stem>.json` under `dir`; returns the CSV path.
pub fn write_result<E: Serialize>(
    dir: &Path,
    stem: &str,
    command: &str,
    cfg: &ExperimentConfig,
    table: &Table,
    details: E,
) -> Result<PathBuf, CliError> {
    let hash = config_hash(cfg);
    let csv_path = dir.join(format!("{stem}.csv"));
    write_atomic(&csv_path, &table.to_csv(&hash, cfg.seed))?;
    let meta = Metadata {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_sha256: &hash,
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        csv: format!("{stem}.csv"),
        rows: table.len(),
        config: cfg,
        details,
    };
    let json = serde_json::to_vec_pretty(&meta).expect("metadata serializes");
    write_atomic(&dir.join(format!("{stem}.json")), &json)?;
    Ok(csv_path)
}
