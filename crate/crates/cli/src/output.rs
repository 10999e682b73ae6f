//! The result envelope and CSV tables written by a run.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Build {
    pub version: &'static str,
    pub git: &'static str,
}

pub const BUILD: Build = Build { version: env!("CARGO_PKG_VERSION"), git: env!("WFDUALITY_GIT_HASH") };

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// A CSV file: `name` is the file stem.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &'static str, header: &[&'static str]) -> Self {
        Table { name, header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        let row: Vec<String> = row.into_iter().collect();
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(dir.join(self.file_name()))?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| CliError::Io(dir.join(self.file_name()), e))?;
        Ok(())
    }
}

/// Everything in a result that must be reproducible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Payload {
    pub config: ExperimentConfig,
    pub build: Build,
    pub metrics: Vec<Metric>,
    pub verdicts: Vec<Verdict>,
    /// Kind-specific report from the core library.
    pub report: serde_json::Value,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultEnvelope {
    pub payload: Payload,
    pub wall_time_s: f64,
}

impl ResultEnvelope {
    pub fn passed(&self) -> bool {
        self.payload.verdicts.iter().all(|v| v.passed)
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("result.json");
        let text = serde_json::to_string_pretty(self).expect("serializable");
        fs::write(&path, text + "\n").map_err(|e| CliError::Io(path, e))
    }
}
