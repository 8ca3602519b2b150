//! Trained surrogates on disk, as JSON.

use std::path::Path;

use gridkan_core::opf::{OutputSpec, Selector};
use gridkan_core::surrogate::Surrogate;
use gridkan_core::{KanInit, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::table::{read_json, write_json};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub seed: u64,
    /// Recipe of the untrained network, so it can be rebuilt exactly.
    pub init: KanInit,
    pub train: TrainConfig,
    pub steps: usize,
    /// SHA-256 of the training data values.
    pub data_hash: String,
    pub scenario_fingerprint: String,
    /// Set when the model was produced by pruning.
    pub prune_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    pub widths: Vec<usize>,
    pub outputs: Vec<Selector>,
    pub output_fingerprint: String,
    pub surrogate: Surrogate,
    pub provenance: Provenance,
}

impl ModelFile {
    pub fn new(surrogate: Surrogate, outputs: &OutputSpec, provenance: Provenance) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            widths: surrogate.network.widths().to_vec(),
            outputs: outputs.outputs.clone(),
            output_fingerprint: outputs.fingerprint(),
            surrogate,
            provenance,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: ModelFile = read_json(path)?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(CliError::format(
                path,
                format!("unsupported model schema version {}", m.schema_version),
            ));
        }
        if m.widths != m.surrogate.network.widths() {
            return Err(CliError::format(path, "recorded widths differ from the network"));
        }
        let spec = OutputSpec {
            outputs: m.outputs.clone(),
        };
        if spec.fingerprint() != m.output_fingerprint {
            return Err(CliError::format(path, "output fingerprint does not match the outputs"));
        }
        Ok(m)
    }

    pub fn output_spec(&self) -> OutputSpec {
        OutputSpec {
            outputs: self.outputs.clone(),
        }
    }
}
