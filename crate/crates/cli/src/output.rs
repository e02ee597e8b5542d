//! CSV tables and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::CliError;

pub const SCHEMA: &str = "# schema=1";

/// Rows keyed by seed and replicate, followed by experiment columns.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    seed: u64,
}

impl Table {
    pub fn new(cfg: &RunConfig, columns: &[&str]) -> Self {
        let mut header = vec!["seed".to_string(), "replicate".to_string()];
        header.extend(columns.iter().map(|c| c.to_string()));
        Table {
            header,
            rows: Vec::new(),
            seed: cfg.seed,
        }
    }

    pub fn row<const N: usize>(&mut self, replicate: usize, cells: [String; N]) {
        debug_assert_eq!(N + 2, self.header.len());
        let mut r = vec![self.seed.to_string(), replicate.to_string()];
        r.extend(cells);
        self.rows.push(r);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| io(e.into_error()))?).expect("csv is utf-8");
        Ok(format!("{SCHEMA}\n{body}"))
    }
}

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub config: &'a RunConfig,
    pub config_hash: String,
    pub seed: u64,
    pub workers: usize,
    pub started_unix_secs: u64,
    pub wall_time_secs: f64,
    pub files: Vec<String>,
    pub summary: Value,
}

pub fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}
