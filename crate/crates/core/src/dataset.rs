use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};

/// Paired `(ξ, Y)` samples stored row-major.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dataset {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    n_inputs: usize,
    n_targets: usize,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from flat row-major buffers. Names default to
    /// `x0..`, `y0..` when empty.
    pub fn new(
        inputs: Vec<f64>,
        targets: Vec<f64>,
        n_inputs: usize,
        n_targets: usize,
        feature_names: Vec<String>,
        target_names: Vec<String>,
    ) -> Result<Self> {
        if n_inputs == 0 || n_targets == 0 {
            return Err(shape_err!("dataset needs at least one input and one target column"));
        }
        if !inputs.len().is_multiple_of(n_inputs) || !targets.len().is_multiple_of(n_targets) {
            return Err(shape_err!("dataset buffers are not whole rows"));
        }
        let rows = inputs.len() / n_inputs;
        if rows != targets.len() / n_targets {
            return Err(shape_err!(
                "{rows} input rows but {} target rows",
                targets.len() / n_targets
            ));
        }
        if rows == 0 {
            return Err(shape_err!("dataset must contain at least one row"));
        }
        if inputs.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::Domain("dataset contains non-finite values".into()));
        }
        let feature_names = default_names(feature_names, n_inputs, "x")?;
        let target_names = default_names(target_names, n_targets, "y")?;
        Ok(Self {
            inputs,
            targets,
            n_inputs,
            n_targets,
            feature_names,
            target_names,
        })
    }

    pub fn from_rows(inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Self> {
        let n_in = inputs.first().map_or(0, Vec::len);
        let n_out = targets.first().map_or(0, Vec::len);
        if inputs.iter().any(|r| r.len() != n_in) || targets.iter().any(|r| r.len() != n_out) {
            return Err(shape_err!("ragged dataset rows"));
        }
        Self::new(inputs.concat(), targets.concat(), n_in, n_out, Vec::new(), Vec::new())
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.n_inputs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn input_row(&self, n: usize) -> &[f64] {
        &self.inputs[n * self.n_inputs..(n + 1) * self.n_inputs]
    }

    pub fn target_row(&self, n: usize) -> &[f64] {
        &self.targets[n * self.n_targets..(n + 1) * self.n_targets]
    }

    pub fn target_column(&self, j: usize) -> Vec<f64> {
        self.targets.iter().skip(j).step_by(self.n_targets).copied().collect()
    }

    pub fn input_column(&self, i: usize) -> Vec<f64> {
        self.inputs.iter().skip(i).step_by(self.n_inputs).copied().collect()
    }

    /// Rows selected by `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut inputs = Vec::with_capacity(indices.len() * self.n_inputs);
        let mut targets = Vec::with_capacity(indices.len() * self.n_targets);
        for &n in indices {
            inputs.extend_from_slice(self.input_row(n));
            targets.extend_from_slice(self.target_row(n));
        }
        Self {
            inputs,
            targets,
            n_inputs: self.n_inputs,
            n_targets: self.n_targets,
            feature_names: self.feature_names.clone(),
            target_names: self.target_names.clone(),
        }
    }

    /// First `n` rows (or all of them when fewer exist).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    /// Same inputs with replaced targets.
    pub fn with_targets(&self, targets: Vec<f64>, n_targets: usize) -> Result<Self> {
        let mut names = self.target_names.clone();
        if names.len() != n_targets {
            names = Vec::new();
        }
        Self::new(
            self.inputs.clone(),
            targets,
            self.n_inputs,
            n_targets,
            self.feature_names.clone(),
            names,
        )
    }
}

fn default_names(names: Vec<String>, n: usize, prefix: &str) -> Result<Vec<String>> {
    if names.is_empty() {
        return Ok((0..n).map(|i| alloc::format!("{prefix}{i}")).collect());
    }
    if names.len() != n {
        return Err(shape_err!("{} column names for {n} columns", names.len()));
    }
    Ok(names)
}
