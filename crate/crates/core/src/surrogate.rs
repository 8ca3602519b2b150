//! KAN surrogate with its input and target scalers.

use alloc::string::String;
use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::error::{shape_err, Error, Result};
use crate::kan::{KanInit, KanNetwork};
use crate::math::sqrt;
use crate::stochastic::ScenarioSet;
use crate::train::{train, TrainConfig, TrainReport};

/// Affine map of each input column from its training range onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InputScaler {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl InputScaler {
    /// Constant columns get a unit-wide range around their value.
    pub fn fit(data: &Dataset) -> Self {
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        for i in 0..data.n_inputs() {
            let col = data.input_column(i);
            let a = col.iter().copied().fold(f64::INFINITY, f64::min);
            let b = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if a < b {
                lo.push(a);
                hi.push(b);
            } else {
                lo.push(a - 0.5);
                hi.push(a + 0.5);
            }
        }
        Self { lo, hi }
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.lo.len() {
            return Err(shape_err!("{} inputs for a scaler of {}", x.len(), self.lo.len()));
        }
        Ok(x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (lo, hi))| 2.0 * (v - lo) / (hi - lo) - 1.0)
            .collect())
    }
}

/// Per-target z-score; constant columns keep unit spread.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TargetScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl TargetScaler {
    pub fn fit(data: &Dataset) -> Self {
        let n = data.len() as f64;
        let (mut mean, mut std) = (Vec::new(), Vec::new());
        for j in 0..data.n_targets() {
            let col = data.target_column(j);
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / n;
            let s = sqrt(var);
            mean.push(m);
            std.push(if s > 0.0 { s } else { 1.0 });
        }
        Self { mean, std }
    }

    pub fn transform(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// Trained network plus the scalers that map physical quantities in and out.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Surrogate {
    pub network: KanNetwork,
    pub inputs: InputScaler,
    pub targets: TargetScaler,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
}

impl Surrogate {
    /// Untrained surrogate whose scalers are fit on `data`. Hidden widths
    /// sit between the data's input and target widths.
    pub fn initialize(data: &Dataset, hidden: &[usize], init: &KanInit) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(data.n_inputs());
        widths.extend_from_slice(hidden);
        widths.push(data.n_targets());
        if hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(Self {
            network: KanNetwork::new(&widths, init)?,
            inputs: InputScaler::fit(data),
            targets: TargetScaler::fit(data),
            feature_names: data.feature_names.clone(),
            target_names: data.target_names.clone(),
        })
    }

    /// `data` in network coordinates: scaled inputs, standardized targets.
    pub fn scale(&self, data: &Dataset) -> Result<Dataset> {
        if data.n_inputs() != self.inputs.lo.len() || data.n_targets() != self.targets.mean.len() {
            return Err(shape_err!("dataset columns do not match the surrogate"));
        }
        let mut x = Vec::with_capacity(data.inputs().len());
        let mut y = Vec::with_capacity(data.targets().len());
        for r in 0..data.len() {
            x.extend(self.inputs.transform(data.input_row(r))?);
            y.extend(self.targets.transform(data.target_row(r)));
        }
        Dataset::new(
            x,
            y,
            data.n_inputs(),
            data.n_targets(),
            data.feature_names.clone(),
            data.target_names.clone(),
        )
    }

    /// Trains on `data`; the report's test RMSE is on standardized targets.
    pub fn fit(&self, data: &Dataset, test: &Dataset, config: &TrainConfig) -> Result<(Self, TrainReport)> {
        let (network, report) = train(&self.network, &self.scale(data)?, &self.scale(test)?, config)?;
        Ok((
            Self {
                network,
                ..self.clone()
            },
            report,
        ))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.network.forward(&self.inputs.transform(x)?)?;
        Ok(self.targets.inverse(&z))
    }

    /// Predicts every row of a row-major input buffer.
    pub fn predict_rows(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.inputs.lo.len();
        if !x.len().is_multiple_of(d) {
            return Err(shape_err!("input buffer is not whole rows of {d}"));
        }
        let mut out = Vec::with_capacity(x.len() / d * self.targets.mean.len());
        for row in x.chunks_exact(d) {
            out.extend(self.predict(row)?);
        }
        Ok(out)
    }
}

/// Surrogate outputs for every scenario, as a dataset row-aligned with the
/// scenario set.
pub fn propagate_surrogate(surrogate: &Surrogate, scenarios: &ScenarioSet) -> Result<Dataset> {
    if scenarios.dim != surrogate.inputs.lo.len() {
        return Err(shape_err!(
            "scenarios have {} dimensions, surrogate expects {}",
            scenarios.dim,
            surrogate.inputs.lo.len()
        ));
    }
    let targets = surrogate.predict_rows(&scenarios.values)?;
    Dataset::new(
        scenarios.values.clone(),
        targets,
        scenarios.dim,
        surrogate.targets.mean.len(),
        surrogate.feature_names.clone(),
        surrogate.target_names.clone(),
    )
}
