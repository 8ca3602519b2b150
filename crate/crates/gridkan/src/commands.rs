//! The pipeline commands. Each one is a pure function of the configuration,
//! its input files and the seed; files carry no timestamps.

use std::path::{Path, PathBuf};

use gridkan_core::distribution::{compare as compare_samples, ComparisonReport, EmpiricalDistribution};
use gridkan_core::interpret::{fit_symbolic, input_ranges, snapshot_on_ranges, SnapshotTag, SymbolicFit};
use gridkan_core::stochastic::{run_monte_carlo, sample_scenarios, ScenarioSet};
use gridkan_core::surrogate::{propagate_surrogate, Surrogate};
use gridkan_core::train::{importance_scores, prune_by_threshold};
use gridkan_core::{Dataset, KanNetwork, TrainReport};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::model::{ModelFile, Provenance};
use crate::seeds;
use crate::table::{
    dataset_hash, fmt_f64, read_dataset, write_dataset, write_json, DatasetMeta, Table, DATASET_SCHEMA_VERSION,
};

/// Default file locations inside the output directory.
pub mod files {
    pub const TRAIN: &str = "train.csv";
    pub const TEST: &str = "test.csv";
    pub const MODEL: &str = "model.json";
    pub const PRUNED_MODEL: &str = "model.pruned.json";
    pub const LOSS_CURVE: &str = "loss_curve.csv";
    pub const SWEEP: &str = "sweep.csv";
    pub const COMPARE_DIR: &str = "compare";
    pub const ACTIVATIONS_DIR: &str = "activations";
    pub const SYMBOLIC: &str = "symbolic.csv";
    pub const SYMBOLIC_REPORT: &str = "symbolic.json";
    pub const PRUNE: &str = "prune.csv";
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn out_path(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

#[derive(Debug)]
pub struct GeneratedData {
    pub train: Dataset,
    pub test: Dataset,
    pub train_meta: DatasetMeta,
    pub test_meta: DatasetMeta,
}

/// Samples train and test scenarios from disjoint seeds, solves every one
/// and writes both datasets with their sidecars.
pub fn gen_data(cfg: &PipelineConfig) -> Result<GeneratedData> {
    let sys = cfg.system()?;
    let spec = cfg.output_spec();
    create_dir(&cfg.out_dir)?;
    let mut made = Vec::with_capacity(2);
    for (file, n, stage) in [
        (files::TRAIN, cfg.data.n_train, seeds::TRAIN_SCENARIOS),
        (files::TEST, cfg.data.n_test, seeds::TEST_SCENARIOS),
    ] {
        let seed = cfg.stage_seed(stage);
        let scenarios = sample_scenarios(&cfg.uncertainty, n, seed)?;
        let mc = run_monte_carlo(&sys, &scenarios, &spec, &cfg.opf, &cfg.uncertainty.names)?;
        for f in &mc.failures {
            log::warn!("{file}: scenario {} dropped: {}", f.index, f.reason);
        }
        let meta = DatasetMeta {
            schema_version: DATASET_SCHEMA_VERSION,
            rows: mc.data.len(),
            n_inputs: mc.data.n_inputs(),
            n_targets: mc.data.n_targets(),
            seed,
            scenario_fingerprint: scenarios.fingerprint.clone(),
            output_fingerprint: spec.fingerprint(),
            clamped: scenarios.clamped,
            failures: mc.failures,
        };
        write_dataset(&out_path(cfg, file), &mc.data, &meta)?;
        log::info!("{file}: {} rows", mc.data.len());
        made.push((mc.data, meta));
    }
    let (test, test_meta) = made.pop().unwrap();
    let (train, train_meta) = made.pop().unwrap();
    Ok(GeneratedData {
        train,
        test,
        train_meta,
        test_meta,
    })
}

/// Reads a dataset and checks it carries the configured outputs.
pub fn load_dataset(cfg: &PipelineConfig, path: &Path) -> Result<(Dataset, DatasetMeta)> {
    let (data, meta) = read_dataset(path)?;
    let spec = cfg.output_spec();
    if meta.output_fingerprint != spec.fingerprint() || data.target_names != spec.names() {
        return Err(CliError::config(
            "outputs",
            format!("{} was generated for different outputs", path.display()),
        ));
    }
    Ok((data, meta))
}

/// Trains one surrogate of the given widths.
pub fn fit_surrogate(
    cfg: &PipelineConfig,
    train: &Dataset,
    test: &Dataset,
    meta: &DatasetMeta,
    widths: &[usize],
) -> Result<(ModelFile, TrainReport)> {
    if widths.len() < 2 || widths[0] != train.n_inputs() || widths[widths.len() - 1] != train.n_targets() {
        return Err(CliError::config(
            "model.widths",
            format!(
                "widths {widths:?} do not fit data with {} inputs and {} outputs",
                train.n_inputs(),
                train.n_targets()
            ),
        ));
    }
    let init = cfg.kan_init();
    let train_cfg = cfg.train_config();
    let untrained = Surrogate::initialize(train, &widths[1..widths.len() - 1], &init)?;
    let (surrogate, report) = untrained.fit(train, test, &train_cfg)?;
    let provenance = Provenance {
        seed: cfg.seed,
        init,
        steps: train_cfg.steps,
        train: train_cfg,
        data_hash: dataset_hash(train),
        scenario_fingerprint: meta.scenario_fingerprint.clone(),
        prune_threshold: None,
    };
    Ok((ModelFile::new(surrogate, &cfg.output_spec(), provenance), report))
}

/// `(step, train MSE, test RMSE)` at every evaluation step.
pub fn loss_curve(report: &TrainReport) -> Table {
    let mut t = Table::new(&["step", "train_mse_std", "test_rmse_std"]);
    for (&step, &test) in report.eval_steps.iter().zip(&report.test_rmse) {
        t.push_numbers(&[step as f64, report.train_loss[step - 1], test]);
    }
    t
}

#[derive(Debug)]
pub struct Trained {
    pub model: ModelFile,
    pub report: TrainReport,
}

pub fn train(cfg: &PipelineConfig, train_path: &Path, test_path: &Path) -> Result<Trained> {
    let (train, meta) = load_dataset(cfg, train_path)?;
    let (test, _) = load_dataset(cfg, test_path)?;
    let (model, report) = fit_surrogate(cfg, &train, &test, &meta, &cfg.model.widths)?;
    create_dir(&cfg.out_dir)?;
    model.save(&out_path(cfg, files::MODEL))?;
    loss_curve(&report).write(&out_path(cfg, files::LOSS_CURVE))?;
    Ok(Trained { model, report })
}

/// Per-output RMSE on standardized targets.
pub fn standardized_rmse_per_output(surrogate: &Surrogate, data: &Dataset) -> Result<Vec<f64>> {
    let scaled = surrogate.scale(data)?;
    let k = scaled.n_targets();
    let mut sse = vec![0.0; k];
    for r in 0..scaled.len() {
        let z = surrogate.network.forward(scaled.input_row(r))?;
        for (j, (p, t)) in z.iter().zip(scaled.target_row(r)).enumerate() {
            sse[j] += (p - t) * (p - t);
        }
    }
    Ok(sse.iter().map(|s| (s / scaled.len() as f64).sqrt()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n_train: usize,
    pub widths: Vec<usize>,
    /// `ok`, or the error that stopped the cell.
    pub status: String,
    pub final_train_mse: f64,
    pub final_test_rmse: f64,
    /// Lowest test RMSE seen at any evaluation step.
    pub best_test_rmse: f64,
    pub best_step: usize,
    /// Standardized test RMSE of the final network, per output.
    pub output_rmse: Vec<f64>,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

fn sweep_cell(
    cfg: &PipelineConfig,
    train: &Dataset,
    test: &Dataset,
    meta: &DatasetMeta,
    n: usize,
    widths: &[usize],
) -> Result<SweepRow> {
    if n > train.len() {
        return Err(CliError::config(
            "sweep.sizes",
            format!("{n} rows requested, {} available", train.len()),
        ));
    }
    let subset = train.head(n);
    let (model, report) = fit_surrogate(cfg, &subset, test, meta, widths)?;
    let (best_step, best) = report
        .eval_steps
        .iter()
        .zip(&report.test_rmse)
        .fold((0, f64::INFINITY), |acc, (&s, &r)| if r < acc.1 { (s, r) } else { acc });
    Ok(SweepRow {
        n_train: n,
        widths: widths.to_vec(),
        status: "ok".into(),
        final_train_mse: report.final_train_mse,
        final_test_rmse: report.final_test_rmse().unwrap_or(f64::NAN),
        best_test_rmse: best,
        best_step,
        output_rmse: standardized_rmse_per_output(&model.surrogate, test)?,
    })
}

/// Trains one surrogate per (size, widths) cell on the leading rows of the
/// training set. A failing cell is recorded and the sweep moves on.
pub fn sweep(cfg: &PipelineConfig, train_path: &Path, test_path: &Path) -> Result<Vec<SweepRow>> {
    let (train, meta) = load_dataset(cfg, train_path)?;
    let (test, _) = load_dataset(cfg, test_path)?;
    let mut rows = Vec::new();
    for widths in &cfg.sweep.widths {
        for &n in &cfg.sweep.sizes {
            let row = sweep_cell(cfg, &train, &test, &meta, n, widths).unwrap_or_else(|e| {
                log::warn!("sweep cell n={n} widths={widths:?} failed: {e}");
                SweepRow {
                    n_train: n,
                    widths: widths.clone(),
                    status: e.to_string(),
                    final_train_mse: f64::NAN,
                    final_test_rmse: f64::NAN,
                    best_test_rmse: f64::NAN,
                    best_step: 0,
                    output_rmse: vec![f64::NAN; test.n_targets()],
                }
            });
            log::info!("sweep n={n} widths={widths:?}: best test rmse {}", row.best_test_rmse);
            rows.push(row);
        }
    }
    let mut header = vec![
        "n_train",
        "widths",
        "status",
        "final_train_mse_std",
        "final_test_rmse_std",
        "best_test_rmse_std",
        "best_step",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    header.extend(test.target_names.iter().map(|n| format!("test_rmse_std_{n}")));
    let mut t = Table {
        header,
        rows: Vec::new(),
    };
    for r in &rows {
        let mut cells = vec![
            r.n_train.to_string(),
            r.widths.iter().map(usize::to_string).collect::<Vec<_>>().join("-"),
            r.status.clone(),
            fmt_f64(r.final_train_mse),
            fmt_f64(r.final_test_rmse),
            fmt_f64(r.best_test_rmse),
            r.best_step.to_string(),
        ];
        cells.extend(r.output_rmse.iter().map(|&v| fmt_f64(v)));
        t.rows.push(cells);
    }
    create_dir(&cfg.out_dir)?;
    t.write(&out_path(cfg, files::SWEEP))?;
    Ok(rows)
}

/// Loads a model and checks it was trained for the configured outputs.
pub fn load_model(cfg: &PipelineConfig, path: &Path) -> Result<ModelFile> {
    let model = ModelFile::load(path)?;
    if model.output_fingerprint != cfg.output_spec().fingerprint() {
        return Err(CliError::config(
            "outputs",
            format!("{} was trained for different outputs", path.display()),
        ));
    }
    Ok(model)
}

/// Surrogate predictions on the scenarios of `data`.
pub fn predict_dataset(model: &ModelFile, data: &Dataset) -> Result<Dataset> {
    let scenarios = ScenarioSet::new(data.inputs().to_vec(), data.n_inputs())?;
    Ok(propagate_surrogate(&model.surrogate, &scenarios)?)
}

/// Compares surrogate predictions with the solved test scenarios and writes
/// the report plus plot-ready PDF and CDF tables per output.
pub fn compare(cfg: &PipelineConfig, model_path: &Path, test_path: &Path) -> Result<ComparisonReport> {
    let model = load_model(cfg, model_path)?;
    let (test, _) = load_dataset(cfg, test_path)?;
    let predicted = predict_dataset(&model, &test)?;
    let report = compare_samples(&predicted, &test, cfg.compare.level, cfg.compare.bins)?;

    let dir = out_path(cfg, files::COMPARE_DIR);
    create_dir(&dir)?;
    write_json(&dir.join("report.json"), &report)?;
    let mut summary = Table::new(&[
        "output",
        "baseline_mean",
        "surrogate_mean",
        "baseline_variance",
        "surrogate_variance",
        "baseline_ci_lo",
        "baseline_ci_hi",
        "surrogate_ci_lo",
        "surrogate_ci_hi",
        "rmse",
        "standardized_rmse",
        "ks",
        "wasserstein1",
    ]);
    for (j, o) in report.outputs.iter().enumerate() {
        let mut row = vec![o.name.clone()];
        row.extend(
            [
                o.baseline.mean,
                o.surrogate.mean,
                o.baseline.variance,
                o.surrogate.variance,
                o.baseline_ci.0,
                o.baseline_ci.1,
                o.surrogate_ci.0,
                o.surrogate_ci.1,
                o.rmse,
                o.standardized_rmse,
                o.ks,
                o.wasserstein1,
            ]
            .map(fmt_f64),
        );
        summary.rows.push(row);

        let mut pdf = Table::new(&["bin_lo", "bin_hi", "baseline_density", "surrogate_density"]);
        for b in 0..o.baseline_pdf.densities.len() {
            pdf.push_numbers(&[
                o.baseline_pdf.edges[b],
                o.baseline_pdf.edges[b + 1],
                o.baseline_pdf.densities[b],
                o.surrogate_pdf.densities[b],
            ]);
        }
        pdf.write(&dir.join(format!("pdf_{}.csv", o.name)))?;

        let base = EmpiricalDistribution::new(&test.target_column(j))?;
        let surr = EmpiricalDistribution::new(&predicted.target_column(j))?;
        let lo = base.min().min(surr.min());
        let hi = base.max().max(surr.max());
        let n = cfg.compare.cdf_points;
        let mut cdf = Table::new(&["x", "baseline_cdf", "surrogate_cdf"]);
        for p in 0..n {
            let x = if p + 1 == n {
                hi
            } else {
                lo + (hi - lo) * p as f64 / (n - 1) as f64
            };
            cdf.push_numbers(&[x, base.cdf(x), surr.cdf(x)]);
        }
        cdf.write(&dir.join(format!("cdf_{}.csv", o.name)))?;
    }
    summary.write(&dir.join("summary.csv"))?;
    Ok(report)
}

/// Before/after samples of one edge activation on a shared x grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeActivation {
    pub layer: usize,
    pub output: usize,
    pub input: usize,
    pub x: Vec<f64>,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
}

/// The untrained network the model started from.
pub fn initial_network(model: &ModelFile) -> Result<KanNetwork> {
    Ok(KanNetwork::new(&model.widths, &model.provenance.init)?)
}

pub fn export_activations(
    cfg: &PipelineConfig,
    model_path: &Path,
    data_path: &Path,
    layer: usize,
) -> Result<Vec<EdgeActivation>> {
    let model = load_model(cfg, model_path)?;
    let (data, _) = load_dataset(cfg, data_path)?;
    let scaled = model.surrogate.scale(&data)?;
    let after = &model.surrogate.network;
    if layer >= after.layers().len() {
        return Err(CliError::config(
            "layer",
            format!(
                "layer {layer} out of range; the model has {} layers",
                after.layers().len()
            ),
        ));
    }
    let before = initial_network(&model)?;
    let ranges = input_ranges(after, layer, scaled.inputs())?;
    let points = cfg.interpret.points;
    let snaps_after = snapshot_on_ranges(after, layer, &ranges, points, SnapshotTag::After)?;
    let snaps_before = snapshot_on_ranges(&before, layer, &ranges, points, SnapshotTag::Before)?;

    let dir = out_path(cfg, files::ACTIVATIONS_DIR);
    create_dir(&dir)?;
    let mut edges = Vec::with_capacity(snaps_after.len());
    for (a, b) in snaps_after.into_iter().zip(snaps_before) {
        let mut t = Table::new(&["x", "phi_before", "phi_after"]);
        for p in 0..a.x.len() {
            t.push_numbers(&[a.x[p], b.values[p], a.values[p]]);
        }
        t.write(&dir.join(format!("layer{}_out{}_in{}.csv", layer, a.output, a.input)))?;
        edges.push(EdgeActivation {
            layer,
            output: a.output,
            input: a.input,
            x: a.x,
            before: b.values,
            after: a.values,
        });
    }
    Ok(edges)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFit {
    pub layer: usize,
    pub output: usize,
    pub input: usize,
    pub importance: f64,
    pub fit: SymbolicFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRef {
    pub layer: usize,
    pub output: usize,
    pub input: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicReport {
    /// Kept edges, most important first.
    pub fits: Vec<EdgeFit>,
    /// Pruned (all-zero) edges.
    pub skipped: Vec<EdgeRef>,
}

pub fn symbolic(cfg: &PipelineConfig, model_path: &Path, data_path: &Path) -> Result<SymbolicReport> {
    let model = load_model(cfg, model_path)?;
    let (data, _) = load_dataset(cfg, data_path)?;
    let scaled = model.surrogate.scale(&data)?;
    let net = &model.surrogate.network;
    let scores = importance_scores(net, scaled.inputs())?;
    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    for (l, layer) in net.layers().iter().enumerate() {
        let ranges = input_ranges(net, l, scaled.inputs())?;
        let snaps = snapshot_on_ranges(net, l, &ranges, cfg.interpret.points, SnapshotTag::After)?;
        for snap in snaps {
            let (output, input) = (snap.output, snap.input);
            if layer.edge(output, input).is_zero() {
                skipped.push(EdgeRef {
                    layer: l,
                    output,
                    input,
                });
                continue;
            }
            fits.push(EdgeFit {
                layer: l,
                output,
                input,
                importance: scores[l][output * layer.n_in() + input],
                fit: fit_symbolic(&snap)?,
            });
        }
    }
    fits.sort_by(|a, b| b.importance.total_cmp(&a.importance));

    let mut t = Table::new(&[
        "layer",
        "output",
        "input",
        "importance",
        "candidate",
        "a",
        "b",
        "c",
        "d",
        "r_squared",
    ]);
    for f in &fits {
        let mut row = vec![f.layer.to_string(), f.output.to_string(), f.input.to_string()];
        row.push(fmt_f64(f.importance));
        row.push(f.fit.candidate.name().to_string());
        row.extend([f.fit.a, f.fit.b, f.fit.c, f.fit.d, f.fit.r_squared].map(fmt_f64));
        t.rows.push(row);
    }
    create_dir(&cfg.out_dir)?;
    t.write(&out_path(cfg, files::SYMBOLIC))?;
    let report = SymbolicReport { fits, skipped };
    write_json(&out_path(cfg, files::SYMBOLIC_REPORT), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneSummary {
    pub model: ModelFile,
    pub kept: usize,
    pub total: usize,
    pub disconnected_outputs: Vec<usize>,
}

/// Zeroes every edge whose importance falls below the configured threshold
/// and saves the result as a new model file.
pub fn prune(cfg: &PipelineConfig, model_path: &Path, data_path: &Path) -> Result<PruneSummary> {
    let model = load_model(cfg, model_path)?;
    let (data, _) = load_dataset(cfg, data_path)?;
    let scaled = model.surrogate.scale(&data)?;
    let net = &model.surrogate.network;
    let threshold = cfg.interpret.prune_threshold;
    let outcome = prune_by_threshold(net, scaled.inputs(), threshold)?;
    for &j in &outcome.disconnected_outputs {
        log::warn!("pruning disconnects output {}", model.surrogate.target_names[j]);
    }
    let scores = importance_scores(net, scaled.inputs())?;
    let mut t = Table::new(&["layer", "output", "input", "importance", "kept"]);
    for (l, (layer, layer_scores)) in net.layers().iter().zip(&scores).enumerate() {
        for (e, &score) in layer_scores.iter().enumerate() {
            let kept = outcome.mask.keep[l][e];
            t.push_numbers(&[
                l as f64,
                (e / layer.n_in()) as f64,
                (e % layer.n_in()) as f64,
                score,
                f64::from(u8::from(kept)),
            ]);
        }
    }
    let mut pruned = model.clone();
    pruned.surrogate.network = net.apply_prune_mask(&outcome.mask)?;
    pruned.provenance.prune_threshold = Some(threshold);
    create_dir(&cfg.out_dir)?;
    t.write(&out_path(cfg, files::PRUNE))?;
    pruned.save(&out_path(cfg, files::PRUNED_MODEL))?;
    Ok(PruneSummary {
        kept: outcome.mask.kept(),
        total: net.edge_count(),
        disconnected_outputs: outcome.disconnected_outputs,
        model: pruned,
    })
}
