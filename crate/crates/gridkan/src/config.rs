//! Pipeline configuration in TOML.

use std::path::{Path, PathBuf};

use gridkan_core::acdc::{builtin_case5, PowerSystem};
use gridkan_core::opf::{OpfConfig, OutputSpec, Selector};
use gridkan_core::stochastic::UncertaintyModel;
use gridkan_core::{KanInit, KanNetwork, TrainConfig};
use serde::{Deserialize, Serialize};
use toml::de::{DeTable, DeValue};

use crate::case;
use crate::error::{CliError, Location, Result};
use crate::seeds;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Case file, relative to the config file. The built-in five-bus case
    /// when absent.
    #[serde(default)]
    pub case: Option<PathBuf>,
    #[serde(default = "UncertaintyModel::case5_default")]
    pub uncertainty: UncertaintyModel,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<Selector>,
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    /// Its `seed` field is replaced by the stage seed derived from `seed`.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub opf: OpfConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub interpret: InterpretConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_outputs() -> Vec<Selector> {
    OutputSpec::case5_default().outputs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Full layer widths, from the scenario dimension to the output count.
    pub widths: Vec<usize>,
    pub grid_intervals: usize,
    pub degree: usize,
    pub init_noise: f64,
    pub spline_weight: f64,
    pub base_weight: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let init = KanInit::default();
        Self {
            widths: vec![4, 5, 5, 5],
            grid_intervals: init.grid_intervals,
            degree: init.degree,
            init_noise: init.init_noise,
            spline_weight: init.spline_weight,
            base_weight: init.base_weight,
        }
    }
}

impl ModelConfig {
    /// Initialisation on the scaled input domain `[-1, 1]`.
    pub fn init(&self, seed: u64) -> KanInit {
        KanInit {
            grid_intervals: self.grid_intervals,
            degree: self.degree,
            domain: (-1.0, 1.0),
            input_domains: None,
            init_noise: self.init_noise,
            base_weight: self.base_weight,
            spline_weight: self.spline_weight,
            seed,
        }
    }

    pub fn hidden(&self) -> &[usize] {
        &self.widths[1..self.widths.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Training-set sizes; each cell trains on the first `n` training rows.
    pub sizes: Vec<usize>,
    pub widths: Vec<Vec<usize>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sizes: vec![500, 1000, 2000, 4000],
            widths: vec![vec![4, 5, 5, 5], vec![4, 8, 5]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub level: f64,
    pub bins: usize,
    /// Points of the tabulated CDFs.
    pub cdf_points: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            level: 0.95,
            bins: 40,
            cdf_points: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpretConfig {
    pub layer: usize,
    pub points: usize,
    pub prune_threshold: f64,
}

impl Default for InterpretConfig {
    fn default() -> Self {
        Self {
            layer: 0,
            points: 101,
            prune_threshold: 0.01,
        }
    }
}

/// One problem found while checking a parsed configuration.
struct Issue {
    key: Vec<Key>,
    message: String,
}

#[derive(Clone)]
enum Key {
    Name(&'static str),
    Index(usize),
}

fn issue(key: &[Key], message: impl Into<String>) -> Issue {
    Issue {
        key: key.to_vec(),
        message: message.into(),
    }
}

fn key_string(key: &[Key]) -> String {
    let mut s = String::new();
    for k in key {
        match k {
            Key::Name(n) => {
                if !s.is_empty() {
                    s.push('.');
                }
                s.push_str(n);
            }
            Key::Index(i) => s.push_str(&format!("[{i}]")),
        }
    }
    s
}

/// Source span of the deepest part of `key` present in the document.
fn locate(src: &str, key: &[Key]) -> Option<Location> {
    let root = DeTable::parse(src).ok()?;
    let mut span = root.span();
    let mut value = DeValue::Table(root.into_inner());
    for k in key {
        let next = match k {
            Key::Name(n) => value.get(*n),
            Key::Index(i) => value.get(*i),
        };
        let Some(next) = next else { break };
        span = next.span();
        let owned = next.get_ref().clone();
        value = owned;
    }
    Some(Location::of_offset(src, span.start))
}

impl PipelineConfig {
    /// Reads and checks a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&src, &path.display().to_string(), base)
    }

    /// Parses `src`; `origin` labels error messages and `base_dir` anchors a
    /// relative case path.
    pub fn parse(src: &str, origin: &str, base_dir: PathBuf) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(src).map_err(|e| CliError::Config {
            origin: origin.into(),
            location: e.span().map(|s| Location::of_offset(src, s.start)),
            key: String::new(),
            message: e.message().trim_end().to_string(),
        })?;
        cfg.base_dir = base_dir;
        if let Some(i) = cfg.check() {
            return Err(CliError::Config {
                origin: origin.into(),
                location: locate(src, &i.key),
                key: key_string(&i.key),
                message: i.message,
            });
        }
        Ok(cfg)
    }

    pub fn output_spec(&self) -> OutputSpec {
        OutputSpec {
            outputs: self.outputs.clone(),
        }
    }

    pub fn stage_seed(&self, stage: u64) -> u64 {
        seeds::derive(self.seed, stage)
    }

    /// Training settings with the derived training seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.stage_seed(seeds::TRAINING),
            ..self.train.clone()
        }
    }

    pub fn kan_init(&self) -> KanInit {
        self.model.init(self.stage_seed(seeds::NETWORK_INIT))
    }

    /// The configured case, checked against the uncertainty model and the
    /// output selection.
    pub fn system(&self) -> Result<PowerSystem> {
        let sys = match &self.case {
            Some(p) => case::load_case(&self.base_dir.join(p))?,
            None => builtin_case5(),
        };
        if sys.scenario_dim() != self.uncertainty.dim() {
            return Err(CliError::config(
                "uncertainty",
                format!(
                    "{} marginals but the case maps {} scenario dimensions",
                    self.uncertainty.dim(),
                    sys.scenario_dim()
                ),
            ));
        }
        self.output_spec()
            .resolve(&sys)
            .map_err(|e| CliError::config("outputs", e))?;
        Ok(sys)
    }

    fn check(&self) -> Option<Issue> {
        use Key::*;
        if self.schema_version != SCHEMA_VERSION {
            return Some(issue(
                &[Name("schema_version")],
                format!(
                    "unsupported schema version {}, expected {SCHEMA_VERSION}",
                    self.schema_version
                ),
            ));
        }
        if let Err(e) = self.uncertainty.validate() {
            return Some(issue(&[Name("uncertainty")], e.to_string()));
        }
        if self.outputs.is_empty() {
            return Some(issue(&[Name("outputs")], "at least one output is required"));
        }
        if self.data.n_train == 0 {
            return Some(issue(&[Name("data"), Name("n_train")], "must be at least 1"));
        }
        if self.data.n_test == 0 {
            return Some(issue(&[Name("data"), Name("n_test")], "must be at least 1"));
        }
        if let Some(i) = self.check_widths(&self.model.widths, &[Name("model"), Name("widths")]) {
            return Some(i);
        }
        if let Err(e) = KanNetwork::new(&self.model.widths, &self.kan_init()) {
            return Some(issue(&[Name("model")], e.to_string()));
        }
        if let Err(e) = self.train.validate() {
            return Some(issue(&[Name("train")], e.to_string()));
        }
        if let Err(e) = self.opf.validate() {
            return Some(issue(&[Name("opf")], e.to_string()));
        }
        if let Some(k) = self.sweep.sizes.iter().position(|&n| n == 0) {
            return Some(issue(
                &[Name("sweep"), Name("sizes"), Index(k)],
                "sample sizes must be at least 1",
            ));
        }
        for (k, w) in self.sweep.widths.iter().enumerate() {
            if let Some(i) = self.check_widths(w, &[Name("sweep"), Name("widths"), Index(k)]) {
                return Some(i);
            }
        }
        if !(self.compare.level > 0.0 && self.compare.level < 1.0) {
            return Some(issue(
                &[Name("compare"), Name("level")],
                "must lie strictly between 0 and 1",
            ));
        }
        if self.compare.bins == 0 {
            return Some(issue(&[Name("compare"), Name("bins")], "must be at least 1"));
        }
        if self.compare.cdf_points < 2 {
            return Some(issue(&[Name("compare"), Name("cdf_points")], "must be at least 2"));
        }
        if self.interpret.points < 10 {
            return Some(issue(
                &[Name("interpret"), Name("points")],
                "symbolic fitting needs at least 10 points",
            ));
        }
        if self.interpret.prune_threshold.is_nan() || self.interpret.prune_threshold < 0.0 {
            return Some(issue(
                &[Name("interpret"), Name("prune_threshold")],
                "must be non-negative",
            ));
        }
        None
    }

    fn check_widths(&self, widths: &[usize], key: &[Key]) -> Option<Issue> {
        if widths.len() < 2 || widths.contains(&0) {
            return Some(issue(key, "needs at least two positive widths"));
        }
        if widths[0] != self.uncertainty.dim() {
            return Some(issue(
                key,
                format!(
                    "first width {} must equal the scenario dimension {}",
                    widths[0],
                    self.uncertainty.dim()
                ),
            ));
        }
        if widths[widths.len() - 1] != self.outputs.len() {
            return Some(issue(
                key,
                format!(
                    "last width {} must equal the output count {}",
                    widths[widths.len() - 1],
                    self.outputs.len()
                ),
            ));
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "schema_version = 1\n\n[data]\nn_train = 10\nn_test = 5\n";

    fn parse(src: &str) -> Result<PipelineConfig> {
        PipelineConfig::parse(src, "test.toml", PathBuf::new())
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.model.widths, [4, 5, 5, 5]);
        assert_eq!(cfg.output_spec(), OutputSpec::case5_default());
        assert_eq!(cfg.uncertainty, UncertaintyModel::case5_default());
        assert_eq!(cfg.system().unwrap(), builtin_case5());
        assert_eq!(cfg.train_config().seed, seeds::TRAINING);
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse("schema_version = 1\n[data]\nn_train = \n").unwrap_err();
        match err {
            CliError::Config { location: Some(l), .. } => assert_eq!(l.line, 3),
            other => panic!("{other:?}"),
        }
        let err = parse(&format!("{MINIMAL}bogus = 3\n")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn semantic_errors_point_at_the_key() {
        let src = "schema_version = 1\n\n[data]\nn_train = 0\nn_test = 5\n";
        let err = parse(src).unwrap_err();
        match &err {
            CliError::Config { location, key, .. } => {
                assert_eq!(key, "data.n_train");
                assert_eq!(location.as_ref().unwrap().line, 4);
            }
            other => panic!("{other:?}"),
        }
        let src = format!("{MINIMAL}\n[model]\nwidths = [4, 5, 3]\n");
        let err = parse(&src).unwrap_err();
        assert!(err.to_string().contains("model.widths"), "{err}");
        assert!(err.to_string().contains("output count 5"), "{err}");
        let src = format!("{MINIMAL}\n[sweep]\nsizes = [10, 0]\n");
        match parse(&src).unwrap_err() {
            CliError::Config { location, key, .. } => {
                assert_eq!(key, "sweep.sizes[1]");
                assert_eq!(location.unwrap(), Location { line: 8, column: 14 });
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_schema_version() {
        let err = parse("schema_version = 2\n[data]\nn_train = 1\nn_test = 1\n").unwrap_err();
        assert!(err.to_string().contains("schema version"), "{err}");
    }

    #[test]
    fn case_dimension_mismatch_is_a_config_error() {
        let src = format!(
            "{MINIMAL}\n[model]\nwidths = [1, 5]\n\n[sweep]\nwidths = [[1, 5]]\n\n[uncertainty]\nnames = [\"only\"]\n\
             marginals = [{{ kind = \"uniform\", lo = 0.9, hi = 1.1 }}]\n"
        );
        let cfg = parse(&src).unwrap();
        let err = cfg.system().unwrap_err();
        assert!(err.to_string().contains("uncertainty"), "{err}");
    }
}
