//! Machine-readable run reports: a JSON document plus a flat CSV.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{hex, RunConfig};

pub const SCHEMA: &str = "mvg-report/1";

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    /// SHA-256 of every input file, keyed by role.
    pub inputs: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, f64>,
    pub details: serde_json::Value,
}

impl Report {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Report {
            schema: SCHEMA,
            command: command.to_string(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            inputs: BTreeMap::new(),
            metrics: BTreeMap::new(),
            details: serde_json::Value::Null,
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(role.to_string(), hex(&Sha256::digest(&bytes)));
        Ok(())
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    /// Write `path` (JSON) and the same path with a `.csv` extension.
    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
        let csv_path = csv_path(path);
        fs::write(&csv_path, self.to_csv()).with_context(|| format!("writing {}", csv_path.display()))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("command,config_hash,seed,metric,value\n");
        for (k, v) in &self.metrics {
            s.push_str(&format!("{},{},{},{k},{v}\n", self.command, self.config_hash, self.seed));
        }
        s
    }
}

pub fn csv_path(path: &Path) -> PathBuf {
    path.with_extension("csv")
}
