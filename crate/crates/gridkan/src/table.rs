//! Delimited tables with a header row, and datasets stored as a table plus
//! a JSON sidecar.

use std::path::{Path, PathBuf};

use gridkan_core::stochastic::ScenarioFailure;
use gridkan_core::Dataset;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Shortest text that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// A table whose cells are kept as text; numeric columns parse on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|&v| fmt_f64(v)).collect());
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Parses column `name` as numbers.
    pub fn numeric_column(&self, name: &str) -> std::result::Result<Vec<f64>, String> {
        let j = self.column_index(name).ok_or_else(|| format!("no column `{name}`"))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row[j]
                    .parse::<f64>()
                    .map_err(|_| format!("row {}: `{}` is not a number", r + 1, row[j]))
            })
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(&self.header).map_err(|e| csv_error(path, e))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header = r
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(String::from)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()
            .map_err(|e| csv_error(path, e))?;
        Ok(Self { header, rows })
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            other => CliError::format(path, format!("{other:?}")),
        }
    } else {
        CliError::format(path, e)
    }
}

/// Provenance stored next to a dataset table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub schema_version: u32,
    pub rows: usize,
    pub n_inputs: usize,
    pub n_targets: usize,
    pub seed: u64,
    pub scenario_fingerprint: String,
    pub output_fingerprint: String,
    /// Truncated draws clamped after exhausting their retries.
    pub clamped: usize,
    /// Scenarios dropped because their OPF failed.
    pub failures: Vec<ScenarioFailure>,
}

pub const DATASET_SCHEMA_VERSION: u32 = 1;

/// `data.csv` -> `data.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
}

pub fn write_dataset(path: &Path, data: &Dataset, meta: &DatasetMeta) -> Result<()> {
    let mut header: Vec<&str> = data.feature_names.iter().map(String::as_str).collect();
    header.extend(data.target_names.iter().map(String::as_str));
    let mut t = Table::new(&header);
    for r in 0..data.len() {
        let mut row = data.input_row(r).to_vec();
        row.extend_from_slice(data.target_row(r));
        t.push_numbers(&row);
    }
    t.write(path)?;
    write_json(&sidecar_path(path), meta)
}

pub fn read_dataset(path: &Path) -> Result<(Dataset, DatasetMeta)> {
    let meta: DatasetMeta = read_json(&sidecar_path(path))?;
    let t = Table::read(path)?;
    let width = meta.n_inputs + meta.n_targets;
    if t.header.len() != width || t.rows.len() != meta.rows {
        return Err(CliError::format(
            path,
            format!(
                "expected {} rows of {width} columns, found {} rows of {}",
                meta.rows,
                t.rows.len(),
                t.header.len()
            ),
        ));
    }
    let mut inputs = Vec::with_capacity(meta.rows * meta.n_inputs);
    let mut targets = Vec::with_capacity(meta.rows * meta.n_targets);
    for (r, row) in t.rows.iter().enumerate() {
        if row.len() != width {
            return Err(CliError::format(path, format!("row {} has {} cells", r + 1, row.len())));
        }
        for (j, cell) in row.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| CliError::format(path, format!("row {}: `{cell}` is not a number", r + 1)))?;
            if j < meta.n_inputs {
                inputs.push(v);
            } else {
                targets.push(v);
            }
        }
    }
    let data = Dataset::new(
        inputs,
        targets,
        meta.n_inputs,
        meta.n_targets,
        t.header[..meta.n_inputs].to_vec(),
        t.header[meta.n_inputs..].to_vec(),
    )
    .map_err(|e| CliError::format(path, e))?;
    Ok((data, meta))
}

/// Hex SHA-256 over the bit patterns of every value of a dataset.
pub fn dataset_hash(data: &Dataset) -> String {
    let mut h = Sha256::new();
    for v in data.inputs().iter().chain(data.targets()) {
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
