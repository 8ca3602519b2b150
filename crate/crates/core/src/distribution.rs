//! Empirical distributions and distances between sample sets.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::error::{shape_err, Error, Result};
use crate::math::{floor, sqrt};

/// Sorted finite samples with optional probability weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    sorted: Vec<f64>,
    /// Cumulative weight of the first `i + 1` samples; `None` when uniform.
    cumulative: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Moments {
    pub mean: f64,
    /// Unbiased variance (reliability-weighted when weights are given);
    /// zero for a single sample.
    pub variance: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Density histogram: `densities[i]` applies on `[edges[i], edges[i+1])`
/// and the densities integrate to one.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub densities: Vec<f64>,
}

impl Histogram {
    pub fn integral(&self) -> f64 {
        self.densities
            .iter()
            .enumerate()
            .map(|(i, d)| d * (self.edges[i + 1] - self.edges[i]))
            .sum()
    }
}

fn check_finite(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(shape_err!("empirical distribution needs at least one sample"));
    }
    if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(alloc::format!("non-finite sample {v}")));
    }
    Ok(())
}

impl EmpiricalDistribution {
    /// Equally weighted samples.
    pub fn new(samples: &[f64]) -> Result<Self> {
        check_finite(samples)?;
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            sorted,
            cumulative: None,
        })
    }

    /// Weighted samples; weights must be non-negative with a positive sum
    /// and are normalised to one.
    pub fn with_weights(samples: &[f64], weights: &[f64]) -> Result<Self> {
        check_finite(samples)?;
        if weights.len() != samples.len() {
            return Err(shape_err!("{} weights for {} samples", weights.len(), samples.len()));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Domain("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Domain("weights must not all be zero".into()));
        }
        let mut pairs: Vec<(f64, f64)> = samples.iter().copied().zip(weights.iter().map(|w| w / total)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = pairs
            .iter()
            .map(|p| {
                acc += p.1;
                acc
            })
            .collect();
        // exact total so the CDF reaches one at the maximum
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(Self {
            sorted: pairs.into_iter().map(|p| p.0).collect(),
            cumulative: Some(cumulative),
        })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    /// Normalised weight of each sorted sample.
    pub fn weights(&self) -> Vec<f64> {
        match &self.cumulative {
            None => vec![1.0 / self.len() as f64; self.len()],
            Some(c) => (0..c.len())
                .map(|i| c[i] - if i == 0 { 0.0 } else { c[i - 1] })
                .collect(),
        }
    }

    /// Probability mass of the `count` smallest samples.
    fn mass(&self, count: usize) -> f64 {
        match (&self.cumulative, count) {
            (_, 0) => 0.0,
            (None, k) => k as f64 / self.len() as f64,
            (Some(c), k) => c[k - 1],
        }
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    pub fn range(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn mean(&self) -> f64 {
        match &self.cumulative {
            None => self.sorted.iter().sum::<f64>() / self.len() as f64,
            Some(_) => self.sorted.iter().zip(self.weights()).map(|(x, w)| x * w).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        match &self.cumulative {
            None => self.sorted.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64,
            Some(_) => {
                let w = self.weights();
                let denom = 1.0 - w.iter().map(|v| v * v).sum::<f64>();
                if denom <= 0.0 {
                    return 0.0;
                }
                self.sorted
                    .iter()
                    .zip(&w)
                    .map(|(x, w)| w * (x - m) * (x - m))
                    .sum::<f64>()
                    / denom
            }
        }
    }

    pub fn moments(&self) -> Moments {
        let variance = self.variance();
        Moments {
            mean: self.mean(),
            variance,
            std: sqrt(variance),
            min: self.min(),
            max: self.max(),
        }
    }

    /// Right-continuous CDF, the mass of samples `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.mass(self.sorted.partition_point(|v| *v <= x))
    }

    /// Quantile. Uniform weights interpolate linearly between order
    /// statistics at position `p (n - 1)`; weighted samples use the
    /// generalised inverse of the CDF.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(alloc::format!("quantile level {p} outside [0, 1]")));
        }
        if let Some(c) = &self.cumulative {
            let i = c.partition_point(|m| *m < p).min(self.len() - 1);
            return Ok(self.sorted[i]);
        }
        let pos = p * (self.len() - 1) as f64;
        let lo = floor(pos) as usize;
        let hi = (lo + 1).min(self.len() - 1);
        let frac = pos - lo as f64;
        Ok(self.sorted[lo] + frac * (self.sorted[hi] - self.sorted[lo]))
    }

    /// Central interval holding `level` of the mass.
    pub fn confidence_interval(&self, level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Domain(alloc::format!("confidence level {level} outside (0, 1)")));
        }
        let tail = (1.0 - level) / 2.0;
        Ok((self.quantile(tail)?, self.quantile(1.0 - tail)?))
    }

    /// Equal-width density histogram spanning `[min, max]`; the last bin is
    /// closed. All-equal samples give one bin of width
    /// `4·ε·max(|x|, 1)` centred on the value, with density its reciprocal.
    pub fn pdf_histogram(&self, bins: usize) -> Result<Histogram> {
        if bins == 0 {
            return Err(Error::Domain("histogram needs at least one bin".into()));
        }
        let (lo, hi) = (self.min(), self.max());
        if lo == hi {
            let half = 2.0 * f64::EPSILON * lo.abs().max(1.0);
            let edges = vec![lo - half, lo + half];
            let densities = vec![1.0 / (edges[1] - edges[0])];
            return Ok(Histogram { edges, densities });
        }
        self.histogram_on(lo, hi, bins)
    }

    /// Density histogram on a fixed range; samples outside it are ignored
    /// and the densities are normalised over the mass inside.
    pub fn histogram_on(&self, lo: f64, hi: f64, bins: usize) -> Result<Histogram> {
        if !(lo < hi) || bins == 0 {
            return Err(Error::Domain("histogram needs lo < hi and at least one bin".into()));
        }
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        edges[bins] = hi;
        let mut mass = vec![0.0; bins];
        let mut inside = 0.0;
        for (&x, w) in self.sorted.iter().zip(self.weights()) {
            if x < lo || x > hi {
                continue;
            }
            let b = (floor((x - lo) / width) as usize).min(bins - 1);
            mass[b] += w;
            inside += w;
        }
        let densities = if inside > 0.0 {
            (0..bins)
                .map(|b| mass[b] / (inside * (edges[b + 1] - edges[b])))
                .collect()
        } else {
            vec![0.0; bins]
        };
        Ok(Histogram { edges, densities })
    }
}

/// Walks the merged sample points of two distributions, calling `visit`
/// with each distinct point and both CDF values there.
fn merged_steps(a: &EmpiricalDistribution, b: &EmpiricalDistribution, mut visit: impl FnMut(f64, f64, f64)) {
    let (xa, xb) = (a.samples(), b.samples());
    let (mut i, mut j) = (0, 0);
    while i < xa.len() || j < xb.len() {
        let x = match (xa.get(i), xb.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        visit(x, a.mass(i), b.mass(j));
    }
}

/// Two-sample Kolmogorov-Smirnov statistic: the supremum of the CDF
/// difference, attained at a sample point.
pub fn ks_statistic(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> f64 {
    let mut sup: f64 = 0.0;
    merged_steps(a, b, |_, fa, fb| sup = sup.max((fa - fb).abs()));
    sup
}

/// First Wasserstein distance, `∫ |F_a - F_b| dx`, integrated exactly over
/// the piecewise-constant CDFs.
pub fn wasserstein1(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> f64 {
    let mut total = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    merged_steps(a, b, |x, fa, fb| {
        if let Some((p, gap)) = prev {
            total += gap * (x - p);
        }
        prev = Some((x, (fa - fb).abs()));
    });
    total
}

/// Distributional comparison of one output between a baseline sample and
/// a surrogate sample drawn on the same scenarios.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OutputComparison {
    pub name: String,
    /// Paired root-mean-square error.
    pub rmse: f64,
    /// Paired RMSE over the baseline standard deviation.
    pub standardized_rmse: f64,
    pub ks: f64,
    pub wasserstein1: f64,
    pub baseline: Moments,
    pub surrogate: Moments,
    pub baseline_ci: (f64, f64),
    pub surrogate_ci: (f64, f64),
    /// Range of the baseline sample, the scale for relative tolerances.
    pub baseline_range: f64,
    /// Both histograms share the edges spanning the pooled samples.
    pub baseline_pdf: Histogram,
    pub surrogate_pdf: Histogram,
}

impl OutputComparison {
    pub fn mean_error_fraction(&self) -> f64 {
        (self.surrogate.mean - self.baseline.mean).abs() / self.baseline_range.max(f64::MIN_POSITIVE)
    }

    /// Larger of the two interval-endpoint errors, as a fraction of range.
    pub fn ci_error_fraction(&self) -> f64 {
        let lo = (self.surrogate_ci.0 - self.baseline_ci.0).abs();
        let hi = (self.surrogate_ci.1 - self.baseline_ci.1).abs();
        lo.max(hi) / self.baseline_range.max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComparisonReport {
    pub samples: usize,
    pub confidence_level: f64,
    pub outputs: Vec<OutputComparison>,
    /// RMSE over every paired entry of every output.
    pub pointwise_rmse: f64,
}

/// Compares surrogate predictions against baseline solutions. Both
/// datasets must carry the same outputs on the same scenarios, row by row.
pub fn compare(surrogate: &Dataset, baseline: &Dataset, level: f64, bins: usize) -> Result<ComparisonReport> {
    if surrogate.target_names != baseline.target_names || surrogate.n_targets() != baseline.n_targets() {
        return Err(Error::Selector(alloc::format!(
            "output specs differ: {:?} vs {:?}",
            surrogate.target_names,
            baseline.target_names
        )));
    }
    if surrogate.len() != baseline.len() || surrogate.inputs() != baseline.inputs() {
        return Err(shape_err!(
            "comparison needs the same scenarios in the same order ({} vs {} rows)",
            surrogate.len(),
            baseline.len()
        ));
    }
    let k = baseline.n_targets();
    let rows = baseline.len();
    let mut outputs = Vec::with_capacity(k);
    let mut pooled = 0.0;
    for j in 0..k {
        let b = baseline.target_column(j);
        let s = surrogate.target_column(j);
        let db = EmpiricalDistribution::new(&b)?;
        let ds = EmpiricalDistribution::new(&s)?;
        let sse = b.iter().zip(&s).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        pooled += sse;
        let rmse = sqrt(sse / rows as f64);
        let baseline_moments = db.moments();
        let spread = if baseline_moments.std > 0.0 {
            baseline_moments.std
        } else {
            1.0
        };
        let (lo, hi) = (db.min().min(ds.min()), db.max().max(ds.max()));
        let (baseline_pdf, surrogate_pdf) = if lo < hi {
            (db.histogram_on(lo, hi, bins)?, ds.histogram_on(lo, hi, bins)?)
        } else {
            (db.pdf_histogram(bins)?, ds.pdf_histogram(bins)?)
        };
        outputs.push(OutputComparison {
            name: baseline.target_names[j].clone(),
            rmse,
            standardized_rmse: rmse / spread,
            ks: ks_statistic(&db, &ds),
            wasserstein1: wasserstein1(&db, &ds),
            baseline: baseline_moments,
            surrogate: ds.moments(),
            baseline_ci: db.confidence_interval(level)?,
            surrogate_ci: ds.confidence_interval(level)?,
            baseline_range: db.range(),
            baseline_pdf,
            surrogate_pdf,
        });
    }
    Ok(ComparisonReport {
        samples: rows,
        confidence_level: level,
        outputs,
        pointwise_rmse: sqrt(pooled / (rows * k) as f64),
    })
}
