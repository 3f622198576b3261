//! CSV and manifest writers. Floats use 17 significant digits in
//! scientific notation; empty cells mean "not reached" or "not available".

use std::fs::File;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn opt_float(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

/// Writes `header` and `rows` to `dir/name`.
pub fn write_csv(dir: &Path, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(File::create(dir.join(name))?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEvent {
    pub time: Option<f64>,
    pub agent: Option<String>,
    pub message: String,
}

/// Run record written next to the CSVs. Contains no wall-clock data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub status: String,
    pub diverged_time: Option<f64>,
    pub outputs: Vec<String>,
    pub events: Vec<ManifestEvent>,
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}
