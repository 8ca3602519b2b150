//! Uncertainty model, scenario sampling and Monte Carlo over the OPF.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::acdc::PowerSystem;
use crate::dataset::Dataset;
use crate::error::{shape_err, Error, Result};
use crate::opf::{extract_outputs, solve_opf, OpfConfig, OutputSpec};

/// Draws before a truncated Gaussian gives up and clamps.
pub const TRUNCATION_RETRIES: usize = 100;

/// Largest failed fraction a Monte Carlo run tolerates.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

/// Marginal law of one scenario dimension.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)
)]
pub enum Marginal {
    /// Gaussian restricted to `[lo, hi]` by rejection.
    TruncatedGaussian {
        mean: f64,
        std: f64,
        lo: f64,
        hi: f64,
    },
    /// Beta(`alpha`, `beta`) mapped affinely onto `[lo, hi]`.
    Beta {
        alpha: f64,
        beta: f64,
        lo: f64,
        hi: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// 1 with probability `p`, else 0.
    Bernoulli {
        p: f64,
    },
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Marginal::TruncatedGaussian { mean, std, lo, hi } => {
                mean.is_finite() && std > 0.0 && std.is_finite() && lo < hi && lo.is_finite() && hi.is_finite()
            }
            Marginal::Beta { alpha, beta, lo, hi } => {
                alpha > 0.0
                    && beta > 0.0
                    && alpha.is_finite()
                    && beta.is_finite()
                    && lo < hi
                    && lo.is_finite()
                    && hi.is_finite()
            }
            Marginal::Uniform { lo, hi } => lo < hi && lo.is_finite() && hi.is_finite(),
            Marginal::Bernoulli { p } => (0.0..=1.0).contains(&p),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid marginal {self:?}")))
        }
    }

    /// Support of the marginal.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Marginal::TruncatedGaussian { lo, hi, .. }
            | Marginal::Beta { lo, hi, .. }
            | Marginal::Uniform { lo, hi } => (lo, hi),
            Marginal::Bernoulli { .. } => (0.0, 1.0),
        }
    }

    /// One draw, and whether truncation fell back to clamping.
    fn draw(&self, rng: &mut ChaCha8Rng) -> (f64, bool) {
        match *self {
            Marginal::TruncatedGaussian { mean, std, lo, hi } => {
                let normal = Normal::new(mean, std).expect("validated");
                let mut x = normal.sample(rng);
                for _ in 0..TRUNCATION_RETRIES {
                    if (lo..=hi).contains(&x) {
                        return (x, false);
                    }
                    x = normal.sample(rng);
                }
                if (lo..=hi).contains(&x) {
                    (x, false)
                } else {
                    (x.clamp(lo, hi), true)
                }
            }
            Marginal::Beta { alpha, beta, lo, hi } => {
                let b = Beta::new(alpha, beta).expect("validated");
                (lo + (hi - lo) * b.sample(rng), false)
            }
            Marginal::Uniform { lo, hi } => (rng.random_range(lo..hi), false),
            Marginal::Bernoulli { p } => (if rng.random_bool(p) { 1.0 } else { 0.0 }, false),
        }
    }

    fn encode(&self, out: &mut Vec<u8>) {
        let (tag, params): (u8, &[f64]) = match self {
            Marginal::TruncatedGaussian { mean, std, lo, hi } => (0, &[*mean, *std, *lo, *hi]),
            Marginal::Beta { alpha, beta, lo, hi } => (1, &[*alpha, *beta, *lo, *hi]),
            Marginal::Uniform { lo, hi } => (2, &[*lo, *hi]),
            Marginal::Bernoulli { p } => (3, &[*p]),
        };
        out.push(tag);
        for p in params {
            out.extend_from_slice(&p.to_bits().to_le_bytes());
        }
    }
}

/// Joint law of the scenario vector: independent marginals.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct UncertaintyModel {
    pub names: Vec<String>,
    pub marginals: Vec<Marginal>,
}

impl UncertaintyModel {
    /// Load factors N(1, 0.1) truncated to `[0.7, 1.3]` and a Beta(2, 2)
    /// solar factor, matching the scenario map of the built-in case.
    pub fn case5_default() -> Self {
        let load = Marginal::TruncatedGaussian {
            mean: 1.0,
            std: 0.1,
            lo: 0.7,
            hi: 1.3,
        };
        Self {
            names: ["load_bus2", "load_bus3", "load_bus45", "solar"]
                .map(String::from)
                .to_vec(),
            marginals: vec![
                load.clone(),
                load.clone(),
                load,
                Marginal::Beta {
                    alpha: 2.0,
                    beta: 2.0,
                    lo: 0.0,
                    hi: 1.0,
                },
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.marginals.is_empty() {
            return Err(Error::Config("uncertainty model has no dimensions".into()));
        }
        if self.names.len() != self.marginals.len() {
            return Err(Error::Config(format!(
                "{} names for {} marginals",
                self.names.len(),
                self.marginals.len()
            )));
        }
        self.marginals.iter().try_for_each(Marginal::validate)
    }

    /// Hex SHA-256 of the model parameters, recorded with generated data.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::new();
        for (name, m) in self.names.iter().zip(&self.marginals) {
            bytes.extend_from_slice(&(name.len() as u64).to_le_bytes());
            bytes.extend_from_slice(name.as_bytes());
            m.encode(&mut bytes);
        }
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Sampled scenarios, row-major, with the seed and model fingerprint that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub values: Vec<f64>,
    pub dim: usize,
    /// Truncated draws that exhausted their retries and were clamped.
    pub clamped: usize,
    pub seed: u64,
    pub fingerprint: String,
}

impl ScenarioSet {
    /// Wraps given scenarios that did not come from a sampler.
    pub fn new(values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(shape_err!("{} values are not whole scenarios of {dim}", values.len()));
        }
        Ok(Self {
            values,
            dim,
            clamped: 0,
            seed: 0,
            fingerprint: String::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }
}

/// Draws `n` scenarios with ChaCha8 seeded by `seed`, dimension by
/// dimension within each scenario.
pub fn sample_scenarios(model: &UncertaintyModel, n: usize, seed: u64) -> Result<ScenarioSet> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n * model.dim());
    let mut clamped = 0;
    for _ in 0..n {
        for m in &model.marginals {
            let (x, c) = m.draw(&mut rng);
            clamped += usize::from(c);
            values.push(x);
        }
    }
    Ok(ScenarioSet {
        values,
        dim: model.dim(),
        clamped,
        seed,
        fingerprint: model.fingerprint(),
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioFailure {
    pub index: usize,
    pub reason: String,
}

/// Successful solves as a dataset (scenarios → outputs) plus a log of the
/// scenarios that failed.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub data: Dataset,
    /// Index into the scenario set of each dataset row.
    pub solved: Vec<usize>,
    pub failures: Vec<ScenarioFailure>,
}

/// Solves the OPF for each scenario. Individual failures are logged; the
/// run aborts when more than 5% of scenarios fail.
pub fn run_monte_carlo(
    sys: &PowerSystem,
    scenarios: &ScenarioSet,
    outputs: &OutputSpec,
    opf: &OpfConfig,
    feature_names: &[String],
) -> Result<MonteCarloResult> {
    if scenarios.dim != sys.scenario_dim() {
        return Err(shape_err!(
            "scenarios have {} dimensions, system maps {}",
            scenarios.dim,
            sys.scenario_dim()
        ));
    }
    outputs.resolve(sys)?;
    let total = scenarios.len();
    let allowed = (MAX_FAILURE_FRACTION * total as f64) as usize;
    let mut inputs = Vec::with_capacity(scenarios.values.len());
    let mut targets = Vec::with_capacity(total * outputs.len());
    let mut solved = Vec::with_capacity(total);
    let mut failures: Vec<ScenarioFailure> = Vec::new();
    for (index, xi) in scenarios.rows().enumerate() {
        let attempt = sys
            .apply_scenario(xi)
            .and_then(|s| {
                let sol = solve_opf(&s, opf)?;
                if sol.converged {
                    Ok((s, sol))
                } else {
                    Err(Error::NotConverged)
                }
            })
            .and_then(|(s, sol)| extract_outputs(&s, &sol, outputs));
        match attempt {
            Ok(y) => {
                inputs.extend_from_slice(xi);
                targets.extend(y);
                solved.push(index);
            }
            Err(e) if matches!(e, Error::Selector(_) | Error::Config(_) | Error::Shape(_)) => return Err(e),
            Err(e) => {
                failures.push(ScenarioFailure {
                    index,
                    reason: e.to_string(),
                });
                if failures.len() > allowed {
                    return Err(Error::TooManyFailures {
                        failed: failures.len(),
                        total,
                        first_reason: failures[0].reason.clone(),
                    });
                }
            }
        }
    }
    if solved.is_empty() {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total,
            first_reason: failures.first().map(|f| f.reason.clone()).unwrap_or_default(),
        });
    }
    let data = Dataset::new(
        inputs,
        targets,
        scenarios.dim,
        outputs.len(),
        feature_names.to_vec(),
        outputs.names(),
    )?;
    Ok(MonteCarloResult { data, solved, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acdc::builtin_case5;
    use crate::opf::Selector;

    #[test]
    fn samples_respect_bounds_and_seed() {
        let model = UncertaintyModel::case5_default();
        let a = sample_scenarios(&model, 2000, 3).unwrap();
        let b = sample_scenarios(&model, 2000, 3).unwrap();
        let c = sample_scenarios(&model, 2000, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
        assert_eq!(a.len(), 2000);
        for row in a.rows() {
            for (x, m) in row.iter().zip(&model.marginals) {
                let (lo, hi) = m.bounds();
                assert!(*x >= lo && *x <= hi);
            }
        }
        let mean = a.rows().map(|r| r[0]).sum::<f64>() / 2000.0;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
        let solar = a.rows().map(|r| r[3]).sum::<f64>() / 2000.0;
        assert!((solar - 0.5).abs() < 0.02, "{solar}");
    }

    #[test]
    fn unreachable_truncation_clamps_and_counts() {
        let model = UncertaintyModel {
            names: vec!["x".into()],
            marginals: vec![Marginal::TruncatedGaussian {
                mean: 0.0,
                std: 1.0,
                lo: 50.0,
                hi: 51.0,
            }],
        };
        let s = sample_scenarios(&model, 10, 0).unwrap();
        assert_eq!(s.clamped, 10);
        assert!(s.values.iter().all(|v| *v == 50.0));
    }

    #[test]
    fn bernoulli_extremes() {
        let model = UncertaintyModel {
            names: vec!["off".into(), "on".into()],
            marginals: vec![Marginal::Bernoulli { p: 0.0 }, Marginal::Bernoulli { p: 1.0 }],
        };
        let s = sample_scenarios(&model, 50, 1).unwrap();
        assert!(s.rows().all(|r| r == [0.0, 1.0]));
    }

    #[test]
    fn invalid_models_are_rejected() {
        let mut m = UncertaintyModel::case5_default();
        m.names.pop();
        assert!(m.validate().is_err());
        let bad = UncertaintyModel {
            names: vec!["x".into()],
            marginals: vec![Marginal::Beta {
                alpha: 0.0,
                beta: 1.0,
                lo: 0.0,
                hi: 1.0,
            }],
        };
        assert!(matches!(sample_scenarios(&bad, 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn fingerprint_tracks_parameters() {
        let a = UncertaintyModel::case5_default();
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
        if let Marginal::Beta { alpha, .. } = &mut b.marginals[3] {
            *alpha = 2.5;
        }
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn monte_carlo_logs_failures_and_aborts() {
        let sys = builtin_case5();
        let spec = OutputSpec {
            outputs: vec![Selector::GenP { gen: 1 }],
        };
        let names = UncertaintyModel::case5_default().names;
        let ok = ScenarioSet::new(vec![1.0, 1.0, 1.0, 0.5, 0.9, 1.1, 1.0, 0.2], 4).unwrap();
        let res = run_monte_carlo(&sys, &ok, &spec, &OpfConfig::default(), &names).unwrap();
        assert_eq!(res.data.len(), 2);
        assert!(res.failures.is_empty());
        assert_eq!(res.data.feature_names, names);
        assert_eq!(res.data.target_names, ["gen1_p"]);

        // a single impossible scenario out of two exceeds the 5% budget
        let bad = ScenarioSet::new(vec![1.0, 1.0, 1.0, 0.5, 1.0, 1.0, 9.0, 0.5], 4).unwrap();
        let err = run_monte_carlo(&sys, &bad, &spec, &OpfConfig::default(), &names).unwrap_err();
        assert!(
            matches!(
                err,
                Error::TooManyFailures {
                    failed: 1,
                    total: 2,
                    ..
                }
            ),
            "{err:?}"
        );
    }
}
