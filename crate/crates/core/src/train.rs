//! Supervised training of a [`KanNetwork`]: MSE + sparsity regularization,
//! exact backpropagation through spline edges, Adam updates, grid
//! extension and importance-based pruning.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{shape_err, Error, Result};
use crate::kan::{KanNetwork, PruneMask};
use crate::math;
use crate::spline::{fit_coefficients, SplineGrid};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// `None` trains full batch.
    pub batch_size: Option<usize>,
    pub l1_penalty: f64,
    pub entropy_penalty: f64,
    pub seed: u64,
    /// `(step, new_G)` pairs; at `step` every edge grid is refit to the
    /// observed activation ranges with `new_G` intervals.
    pub grid_update_schedule: Vec<(usize, usize)>,
    /// Test RMSE is evaluated every `eval_every` steps and after the last one.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            learning_rate: 0.01,
            batch_size: None,
            l1_penalty: 0.0,
            entropy_penalty: 0.0,
            seed: 0,
            grid_update_schedule: Vec::new(),
            eval_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(alloc::format!(
                "learning_rate {} must lie in (0, 1]",
                self.learning_rate
            )));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.l1_penalty >= 0.0 && self.entropy_penalty >= 0.0)
            || !(self.l1_penalty.is_finite() && self.entropy_penalty.is_finite())
        {
            return Err(Error::Config("penalties must be finite and non-negative".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        if self.grid_update_schedule.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Config("grid update steps must be strictly increasing".into()));
        }
        if self.grid_update_schedule.iter().any(|&(_, g)| g == 0) {
            return Err(Error::Config("grid updates need a positive interval count".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    /// Data MSE of the batch at each step, before that step's update.
    pub train_loss: Vec<f64>,
    /// Steps (1-based count of completed updates) at which `test_rmse` was taken.
    pub eval_steps: Vec<usize>,
    pub test_rmse: Vec<f64>,
    /// Full training-set MSE of the returned network.
    pub final_train_mse: f64,
    pub param_count: usize,
    /// Ridge fallbacks taken during scheduled grid refits.
    pub ridge_fallbacks: usize,
    /// Not reproducible, so never serialized.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub wall_seconds: f64,
}

impl TrainReport {
    pub fn final_test_rmse(&self) -> Option<f64> {
        self.test_rmse.last().copied()
    }
}

/// Loss terms for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub mse: f64,
    pub l1: f64,
    pub entropy: f64,
    pub regularization: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.mse + self.regularization
    }
}

/// Gradient of the total loss, laid out like [`KanNetwork::parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, g| m.max(g.abs()))
    }
}

fn check_inputs(net: &KanNetwork, inputs: &[f64]) -> Result<usize> {
    let n0 = net.input_dim();
    if inputs.is_empty() || !inputs.len().is_multiple_of(n0) {
        return Err(shape_err!(
            "input buffer of length {} is not a whole number of {n0}-wide rows",
            inputs.len()
        ));
    }
    Ok(inputs.len() / n0)
}

fn check_batch(net: &KanNetwork, batch: &Dataset) -> Result<()> {
    if batch.n_inputs() != net.input_dim() || batch.n_targets() != net.output_dim() {
        return Err(shape_err!(
            "dataset is {}→{}, network is {}→{}",
            batch.n_inputs(),
            batch.n_targets(),
            net.input_dim(),
            net.output_dim()
        ));
    }
    Ok(())
}

/// Forward/backward pass over a batch. `targets` may be omitted to evaluate
/// the regularizer alone.
fn evaluate(
    net: &KanNetwork,
    inputs: &[f64],
    targets: Option<&[f64]>,
    l1: f64,
    entropy: f64,
    want_grad: bool,
) -> (LossBreakdown, Vec<f64>) {
    let n0 = net.input_dim();
    let rows = inputs.len() / n0;
    let layers = net.layers();
    let regularize = l1 > 0.0 || entropy > 0.0;

    // acts[l]: rows × widths[l]; phis[l]: rows × edges(l) when regularizing.
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers.len() + 1);
    acts.push(inputs.to_vec());
    let mut phis: Vec<Vec<f64>> = Vec::new();
    for layer in layers {
        let (n_in, n_out) = (layer.n_in(), layer.n_out());
        let x = acts.last().unwrap();
        let mut out = alloc::vec![0.0; rows * n_out];
        let mut phi = if regularize {
            alloc::vec![0.0; rows * n_in * n_out]
        } else {
            Vec::new()
        };
        for n in 0..rows {
            let xr = &x[n * n_in..(n + 1) * n_in];
            for j in 0..n_out {
                let mut acc = 0.0;
                for (i, &xi) in xr.iter().enumerate() {
                    let v = layer.edges()[j * n_in + i].activation(xi);
                    if regularize {
                        phi[n * n_in * n_out + j * n_in + i] = v;
                    }
                    acc += v;
                }
                out[n * n_out + j] = acc;
            }
        }
        acts.push(out);
        phis.push(phi);
    }

    let mut loss = LossBreakdown::default();
    // d(regularization)/d(mean |φ_e|) per layer and edge.
    let mut reg_weight: Vec<Vec<f64>> = Vec::new();
    if regularize {
        for (layer, phi) in layers.iter().zip(&phis) {
            let m = layer.edges().len();
            let mut mean_abs = alloc::vec![0.0; m];
            for n in 0..rows {
                for e in 0..m {
                    mean_abs[e] += phi[n * m + e].abs();
                }
            }
            mean_abs.iter_mut().for_each(|a| *a /= rows as f64);
            let total: f64 = mean_abs.iter().sum();
            let mut h = 0.0;
            if total > 0.0 {
                for &a in &mean_abs {
                    if a > 0.0 {
                        let p = a / total;
                        h -= p * math::ln(p);
                    }
                }
            }
            loss.l1 += mean_abs.iter().sum::<f64>();
            loss.entropy += h;
            let weights = mean_abs
                .iter()
                .map(|&a| {
                    let mut w = l1;
                    if total > 0.0 && a > 0.0 {
                        w += entropy * (-math::ln(a / total) - h) / total;
                    }
                    w
                })
                .collect();
            reg_weight.push(weights);
        }
        loss.regularization = l1 * loss.l1 + entropy * loss.entropy;
    }

    let n_last = net.output_dim();
    let mut delta = alloc::vec![0.0; rows * n_last];
    if let Some(t) = targets {
        let y = acts.last().unwrap();
        let scale = 2.0 / (rows * n_last) as f64;
        let mut sse = 0.0;
        for idx in 0..rows * n_last {
            let r = y[idx] - t[idx];
            sse += r * r;
            delta[idx] = scale * r;
        }
        loss.mse = sse / (rows * n_last) as f64;
    }
    if !want_grad {
        return (loss, Vec::new());
    }

    let mut offsets = Vec::with_capacity(layers.len());
    let mut offset = 0;
    for layer in layers {
        let mut o = Vec::with_capacity(layer.edges().len());
        for e in layer.edges() {
            o.push(offset);
            offset += e.param_count();
        }
        offsets.push(o);
    }
    let mut grad = alloc::vec![0.0; offset];

    for (l, layer) in layers.iter().enumerate().rev() {
        let (n_in, n_out) = (layer.n_in(), layer.n_out());
        let m = n_in * n_out;
        let x = &acts[l];
        let mut next_delta = if l > 0 {
            alloc::vec![0.0; rows * n_in]
        } else {
            Vec::new()
        };
        for n in 0..rows {
            for j in 0..n_out {
                let d_out = delta[n * n_out + j];
                for i in 0..n_in {
                    let e = j * n_in + i;
                    let mut g = d_out;
                    if regularize {
                        let phi = phis[l][n * m + e];
                        g += reg_weight[l][e] * math::sign0(phi) / rows as f64;
                    }
                    if g == 0.0 {
                        continue;
                    }
                    let edge = &layer.edges()[e];
                    let xv = x[n * n_in + i];
                    let off = offsets[l][e];
                    let nc = edge.coeffs.len();
                    let mut spline = 0.0;
                    let mut slope = 0.0;
                    if let Some(local) = edge.grid.local_basis(xv) {
                        for r in 0..=edge.grid.degree() {
                            let idx = local.first + r as isize;
                            if idx >= 0 && (idx as usize) < nc {
                                let c = edge.coeffs[idx as usize];
                                spline += c * local.values[r];
                                slope += c * local.derivatives[r];
                                grad[off + idx as usize] += g * edge.spline_weight * local.values[r];
                            }
                        }
                    }
                    grad[off + nc] += g * math::silu(xv);
                    grad[off + nc + 1] += g * spline;
                    if l > 0 {
                        let dphi = edge.base_weight * math::silu_derivative(xv) + edge.spline_weight * slope;
                        next_delta[n * n_in + i] += g * dphi;
                    }
                }
            }
        }
        delta = next_delta;
    }
    (loss, grad)
}

/// Mean squared error over all samples and outputs.
pub fn mse_loss(net: &KanNetwork, batch: &Dataset) -> Result<f64> {
    check_batch(net, batch)?;
    Ok(evaluate(net, batch.inputs(), Some(batch.targets()), 0.0, 0.0, false)
        .0
        .mse)
}

/// Root mean squared error over all samples and outputs.
pub fn rmse(net: &KanNetwork, batch: &Dataset) -> Result<f64> {
    mse_loss(net, batch).map(math::sqrt)
}

/// `λ·Σ_edges mean|φ| + entropy_penalty·Σ_layers H(layer)` on `inputs`
/// (row-major, `widths[0]` columns).
pub fn regularization_loss(net: &KanNetwork, inputs: &[f64], config: &TrainConfig) -> Result<f64> {
    Ok(regularization_terms(net, inputs, config)?.regularization)
}

/// Regularization with the unweighted L1 and entropy sums exposed.
pub fn regularization_terms(net: &KanNetwork, inputs: &[f64], config: &TrainConfig) -> Result<LossBreakdown> {
    check_inputs(net, inputs)?;
    // Evaluate terms with unit weights so they are reported even when a penalty is zero.
    let (mut terms, _) = evaluate(net, inputs, None, 1.0, 1.0, false);
    terms.regularization = config.l1_penalty * terms.l1 + config.entropy_penalty * terms.entropy;
    Ok(terms)
}

/// Total loss (MSE + regularization) of `net` on `batch`.
pub fn total_loss(net: &KanNetwork, batch: &Dataset, config: &TrainConfig) -> Result<LossBreakdown> {
    check_batch(net, batch)?;
    Ok(evaluate(
        net,
        batch.inputs(),
        Some(batch.targets()),
        config.l1_penalty,
        config.entropy_penalty,
        false,
    )
    .0)
}

/// Exact gradient of MSE + regularization with respect to every edge
/// coefficient, base weight and spline weight.
pub fn gradients(net: &KanNetwork, batch: &Dataset, config: &TrainConfig) -> Result<Gradients> {
    check_batch(net, batch)?;
    let (_, g) = evaluate(
        net,
        batch.inputs(),
        Some(batch.targets()),
        config.l1_penalty,
        config.entropy_penalty,
        true,
    );
    Ok(Gradients(g))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: alloc::vec![0.0; n],
            v: alloc::vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(Self::BETA1, self.t as f64);
        let c2 = 1.0 - libm::pow(Self::BETA2, self.t as f64);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / (math::sqrt(*v / c2) + Self::EPS);
        }
    }
}

/// Trains a copy of `net` with Adam. Deterministic for a fixed config.
pub fn train(
    net: &KanNetwork,
    data: &Dataset,
    test: &Dataset,
    config: &TrainConfig,
) -> Result<(KanNetwork, TrainReport)> {
    config.validate()?;
    check_batch(net, data)?;
    check_batch(net, test)?;
    #[cfg(feature = "std")]
    let started = std::time::Instant::now();

    let mut net = net.clone();
    let mut params = net.parameters();
    let mut adam = Adam::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = TrainReport {
        train_loss: Vec::with_capacity(config.steps),
        ..TrainReport::default()
    };
    let mut schedule = config.grid_update_schedule.iter().peekable();

    for step in 0..config.steps {
        while let Some(&&(at, new_g)) = schedule.peek() {
            if at > step {
                break;
            }
            schedule.next();
            let refit = refit_grid(&net, new_g, data.inputs())?;
            report.ridge_fallbacks += refit.ridge_fallbacks;
            net = refit.network;
            params = net.parameters();
            adam = Adam::new(params.len());
        }

        let (loss, grad) = match config.batch_size {
            Some(b) if b < data.len() => {
                let idx = rand::seq::index::sample(&mut rng, data.len(), b).into_vec();
                let batch = data.select(&idx);
                evaluate(
                    &net,
                    batch.inputs(),
                    Some(batch.targets()),
                    config.l1_penalty,
                    config.entropy_penalty,
                    true,
                )
            }
            _ => evaluate(
                &net,
                data.inputs(),
                Some(data.targets()),
                config.l1_penalty,
                config.entropy_penalty,
                true,
            ),
        };
        if !loss.total().is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged { step });
        }
        report.train_loss.push(loss.mse);
        adam.step(&mut params, &grad, config.learning_rate);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::TrainingDiverged { step });
        }
        net.set_parameters(&params)?;

        let done = step + 1;
        if done % config.eval_every == 0 || done == config.steps {
            let r = rmse(&net, test)?;
            if !r.is_finite() {
                return Err(Error::TrainingDiverged { step });
            }
            report.eval_steps.push(done);
            report.test_rmse.push(r);
        }
    }
    report.final_train_mse = mse_loss(&net, data)?;
    report.param_count = net.param_count();
    #[cfg(feature = "std")]
    {
        report.wall_seconds = started.elapsed().as_secs_f64();
    }
    Ok((net, report))
}

/// Result of refitting every edge onto a new grid.
#[derive(Debug, Clone)]
pub struct GridExtension {
    pub network: KanNetwork,
    /// Edges whose least-squares refit was rank deficient and needed ridge
    /// regularization.
    pub ridge_fallbacks: usize,
}

/// Refines every edge grid to `new_g` intervals (`new_g` must exceed the
/// current count), resetting each domain to its observed input range ±10%
/// and least-squares refitting the spline so the activation is preserved on
/// `sample_inputs`.
pub fn extend_grid(net: &KanNetwork, new_g: usize, sample_inputs: &[f64]) -> Result<GridExtension> {
    let current = net
        .layers()
        .iter()
        .flat_map(|l| l.edges())
        .map(|e| e.grid.num_intervals())
        .max()
        .unwrap_or(0);
    if new_g <= current {
        return Err(Error::Config(alloc::format!(
            "grid extension needs more intervals than the current {current}, got {new_g}"
        )));
    }
    refit_grid(net, new_g, sample_inputs)
}

/// Like [`extend_grid`] but also accepts an unchanged interval count, which
/// only re-centers the grids on the observed ranges.
pub fn refit_grid(net: &KanNetwork, new_g: usize, sample_inputs: &[f64]) -> Result<GridExtension> {
    let rows = check_inputs(net, sample_inputs)?;
    let traces = layer_inputs(net, sample_inputs, rows)?;
    let mut out = net.clone();
    let mut ridge_fallbacks = 0;
    for (l, layer) in out.layers_mut().iter_mut().enumerate() {
        let n_in = layer.n_in();
        let x = &traces[l];
        let columns: Vec<Vec<f64>> = (0..n_in)
            .map(|i| (0..rows).map(|n| x[n * n_in + i]).collect())
            .collect();
        let domains: Vec<(f64, f64)> = columns.iter().map(|c| padded_range(c)).collect();
        for (e, edge) in layer.edges_mut().iter_mut().enumerate() {
            let i = e % n_in;
            let (lo, hi) = domains[i];
            let grid = SplineGrid::new(lo, hi, new_g, edge.grid.degree())?;
            let ys: Vec<f64> = columns[i].iter().map(|&v| edge.spline(v)).collect();
            let fit = fit_coefficients(&grid, &columns[i], &ys)?;
            ridge_fallbacks += usize::from(fit.ridge);
            edge.grid = grid;
            edge.coeffs = fit.coeffs;
        }
    }
    Ok(GridExtension {
        network: out,
        ridge_fallbacks,
    })
}

/// Observed `[min, max]` widened by 10% of the range on each side.
fn padded_range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let margin = if range > 1e-12 * lo.abs().max(hi.abs()).max(1.0) {
        0.1 * range
    } else {
        0.1 * lo.abs().max(1.0)
    };
    (lo - margin, hi + margin)
}

/// Row-major inputs of each layer for a batch.
pub(crate) fn layer_inputs(net: &KanNetwork, inputs: &[f64], rows: usize) -> Result<Vec<Vec<f64>>> {
    if let Some(bad) = inputs.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(alloc::format!("non-finite sample input {bad}")));
    }
    let mut acts = Vec::with_capacity(net.layers().len());
    acts.push(inputs.to_vec());
    for layer in &net.layers()[..net.layers().len() - 1] {
        let (n_in, n_out) = (layer.n_in(), layer.n_out());
        let x = acts.last().unwrap();
        let mut next = alloc::vec![0.0; rows * n_out];
        for n in 0..rows {
            layer.forward_unchecked(&x[n * n_in..(n + 1) * n_in], &mut next[n * n_out..(n + 1) * n_out]);
        }
        acts.push(next);
    }
    Ok(acts)
}

/// Per-edge importance `mean |φ(x)|` over the samples; one row-major vector
/// per layer.
pub fn importance_scores(net: &KanNetwork, sample_inputs: &[f64]) -> Result<Vec<Vec<f64>>> {
    let rows = check_inputs(net, sample_inputs)?;
    let traces = layer_inputs(net, sample_inputs, rows)?;
    Ok(net
        .layers()
        .iter()
        .zip(&traces)
        .map(|(layer, x)| {
            let n_in = layer.n_in();
            layer
                .edges()
                .iter()
                .enumerate()
                .map(|(e, edge)| {
                    let i = e % n_in;
                    (0..rows).map(|n| edge.activation(x[n * n_in + i]).abs()).sum::<f64>() / rows as f64
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    pub mask: PruneMask,
    /// Final-layer outputs no longer reachable from any input.
    pub disconnected_outputs: Vec<usize>,
}

/// Drops exactly the edges whose importance score is below `threshold`.
pub fn prune_by_threshold(net: &KanNetwork, sample_inputs: &[f64], threshold: f64) -> Result<PruneOutcome> {
    if !(threshold >= 0.0) {
        return Err(Error::Config(alloc::format!(
            "prune threshold {threshold} must be non-negative"
        )));
    }
    let scores = importance_scores(net, sample_inputs)?;
    let mask = PruneMask {
        keep: scores
            .iter()
            .map(|layer| layer.iter().map(|&s| s >= threshold).collect())
            .collect(),
    };
    let mut reachable = alloc::vec![true; net.input_dim()];
    for (layer, keep) in net.layers().iter().zip(&mask.keep) {
        let n_in = layer.n_in();
        reachable = (0..layer.n_out())
            .map(|j| (0..n_in).any(|i| keep[j * n_in + i] && reachable[i]))
            .collect();
    }
    let disconnected_outputs = reachable
        .iter()
        .enumerate()
        .filter(|(_, &r)| !r)
        .map(|(j, _)| j)
        .collect();
    Ok(PruneOutcome {
        mask,
        disconnected_outputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kan::{KanInit, KanLayer, SplineEdge};
    use alloc::vec;

    fn zero_net(widths: &[usize]) -> KanNetwork {
        KanNetwork::zeros(widths, &SplineGrid::new(-1.0, 1.0, 5, 3).unwrap()).unwrap()
    }

    #[test]
    fn mse_examples() {
        let net = zero_net(&[1, 1]);
        let one = Dataset::from_rows(&[vec![0.3]], &[vec![2.0]]).unwrap();
        assert_eq!(mse_loss(&net, &one).unwrap(), 4.0);
        let two = Dataset::from_rows(&[vec![0.3], vec![-0.1]], &[vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(mse_loss(&net, &two).unwrap(), 5.0);
        let exact = Dataset::from_rows(&[vec![0.3]], &[vec![0.0]]).unwrap();
        assert_eq!(mse_loss(&net, &exact).unwrap(), 0.0);
        let wrong = Dataset::from_rows(&[vec![0.3, 0.1]], &[vec![0.0]]).unwrap();
        assert!(mse_loss(&net, &wrong).is_err());
    }

    #[test]
    fn regularization_examples() {
        let cfg = TrainConfig {
            l1_penalty: 1.0,
            entropy_penalty: 1.0,
            ..TrainConfig::default()
        };
        assert_eq!(
            regularization_loss(&zero_net(&[2, 3, 1]), &[0.1, 0.2], &cfg).unwrap(),
            0.0
        );

        // constant-coefficient spline: Σ c B = 0.5 inside the domain
        let grid = SplineGrid::new(-1.0, 1.0, 5, 3).unwrap();
        let edge = SplineEdge::new(grid, vec![0.5; 8], 0.0, 1.0).unwrap();
        let net = KanNetwork::from_layers(vec![KanLayer::new(1, 1, vec![edge]).unwrap()]).unwrap();
        let terms = regularization_terms(&net, &[-0.7, 0.0, 0.4, 0.9], &cfg).unwrap();
        assert!((terms.l1 - 0.5).abs() < 1e-12);
        assert_eq!(terms.entropy, 0.0);
    }

    #[test]
    fn ws_gradient_single_sample() {
        let grid = SplineGrid::new(-1.0, 1.0, 5, 3).unwrap();
        let coeffs: Vec<f64> = (0..8).map(|i| 0.1 * i as f64 - 0.3).collect();
        let edge = SplineEdge::new(grid, coeffs, 0.4, 0.7).unwrap();
        let net = KanNetwork::from_layers(vec![KanLayer::new(1, 1, vec![edge.clone()]).unwrap()]).unwrap();
        let x = 0.37;
        let y = 0.2;
        let batch = Dataset::from_rows(&[vec![x]], &[vec![y]]).unwrap();
        let g = gradients(&net, &batch, &TrainConfig::default()).unwrap();
        let yhat = edge.activation(x);
        let expected = 2.0 * (yhat - y) * edge.spline(x);
        assert!((g.0[9] - expected).abs() < 1e-14);
    }

    #[test]
    fn zero_gradient_at_interpolation() {
        let net = KanNetwork::new(
            &[2, 2, 1],
            &KanInit {
                seed: 3,
                ..KanInit::default()
            },
        )
        .unwrap();
        let inputs = vec![vec![0.1, -0.4], vec![0.6, 0.2]];
        let targets: Vec<Vec<f64>> = inputs.iter().map(|x| net.forward(x).unwrap()).collect();
        let batch = Dataset::from_rows(&inputs, &targets).unwrap();
        let g = gradients(&net, &batch, &TrainConfig::default()).unwrap();
        assert!(g.max_abs() <= 1e-12);
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrainConfig {
                learning_rate: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                learning_rate: 1.5,
                ..TrainConfig::default()
            },
            TrainConfig {
                steps: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                grid_update_schedule: vec![(10, 6), (10, 8)],
                ..TrainConfig::default()
            },
            TrainConfig {
                l1_penalty: -1.0,
                ..TrainConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn prune_thresholds() {
        let grid = SplineGrid::new(-1.0, 1.0, 3, 3).unwrap();
        let live = SplineEdge::new(grid.clone(), vec![0.2; 6], 1.0, 1.0).unwrap();
        let dead = SplineEdge::zero(grid);
        let net = KanNetwork::from_layers(vec![KanLayer::new(2, 1, vec![live, dead]).unwrap()]).unwrap();
        let xs = [0.5, -0.2, 0.1, 0.9];
        assert_eq!(prune_by_threshold(&net, &xs, 0.0).unwrap().mask.kept(), 2);
        let one = prune_by_threshold(&net, &xs, 1e-9).unwrap();
        assert_eq!(one.mask.keep, vec![vec![true, false]]);
        assert!(one.disconnected_outputs.is_empty());
        let all = prune_by_threshold(&net, &xs, 1e3).unwrap();
        assert_eq!(all.mask.kept(), 0);
        assert_eq!(all.disconnected_outputs, vec![0]);
    }

    #[test]
    fn extend_grid_counts() {
        let net = KanNetwork::new(&[2, 1], &KanInit::default()).unwrap();
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let ext = extend_grid(&net, 10, &xs).unwrap();
        for e in ext.network.layers()[0].edges() {
            assert_eq!(e.coeffs.len(), 13);
        }
        assert!(extend_grid(&net, 5, &xs).is_err());
    }
}
