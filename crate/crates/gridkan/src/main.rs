use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gridkan::commands::{self, files};
use gridkan::{CliError, PipelineConfig};

/// KAN surrogates for stochastic AC/DC optimal power flow.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the global seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory of the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample scenarios, solve them and write train/test datasets.
    GenData,
    /// Train the configured surrogate.
    Train {
        /// Training dataset (default: `train.csv` in the output directory).
        #[arg(long)]
        train: Option<PathBuf>,
        /// Held-out dataset (default: `test.csv` in the output directory).
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Train one surrogate per (sample size, widths) pair.
    Sweep {
        /// Training dataset (default: `train.csv` in the output directory).
        #[arg(long)]
        train: Option<PathBuf>,
        /// Held-out dataset (default: `test.csv` in the output directory).
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Compare surrogate and solver distributions on the test scenarios.
    Compare {
        /// Model file (default: `model.json` in the output directory).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Held-out dataset (default: `test.csv` in the output directory).
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Tabulate edge activations before and after training.
    ExportActivations {
        /// Model file (default: `model.json` in the output directory).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset the activations are sampled on (default: the training set).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Layer to export (default: `interpret.layer` of the configuration).
        #[arg(long)]
        layer: Option<usize>,
    },
    /// Fit symbolic candidates to every kept edge.
    Symbolic {
        /// Model file (default: `model.json` in the output directory).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset the activations are sampled on (default: the training set).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Drop edges below the configured importance threshold.
    Prune {
        /// Model file (default: `model.json` in the output directory).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset the activations are sampled on (default: the training set).
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn or_default(cfg: &PipelineConfig, given: Option<PathBuf>, name: &str) -> PathBuf {
    given.unwrap_or_else(|| commands::out_path(cfg, name))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .ok_or_else(|| CliError::config("--config", "a configuration file is required"))?;
    let mut cfg = PipelineConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    let at = |name: &str| commands::out_path(&cfg, name);
    match cli.command {
        Command::GenData => {
            let d = commands::gen_data(&cfg)?;
            println!(
                "train: {} rows ({} failed), test: {} rows ({} failed) in {}",
                d.train.len(),
                d.train_meta.failures.len(),
                d.test.len(),
                d.test_meta.failures.len(),
                cfg.out_dir.display()
            );
        }
        Command::Train { train, test } => {
            let t = commands::train(
                &cfg,
                &or_default(&cfg, train, files::TRAIN),
                &or_default(&cfg, test, files::TEST),
            )?;
            println!(
                "trained {:?}: final train mse {:.3e}, test rmse {:.3e} -> {}",
                t.model.widths,
                t.report.final_train_mse,
                t.report.final_test_rmse().unwrap_or(f64::NAN),
                at(files::MODEL).display()
            );
        }
        Command::Sweep { train, test } => {
            let rows = commands::sweep(
                &cfg,
                &or_default(&cfg, train, files::TRAIN),
                &or_default(&cfg, test, files::TEST),
            )?;
            for r in &rows {
                println!(
                    "n={:<6} widths={:?} best test rmse {:.4e} ({})",
                    r.n_train, r.widths, r.best_test_rmse, r.status
                );
            }
        }
        Command::Compare { model, test } => {
            let report = commands::compare(
                &cfg,
                &or_default(&cfg, model, files::MODEL),
                &or_default(&cfg, test, files::TEST),
            )?;
            for o in &report.outputs {
                println!(
                    "{:<12} rmse {:.3e}  ks {:.4}  w1 {:.3e}  mean {:.5} vs {:.5}",
                    o.name, o.rmse, o.ks, o.wasserstein1, o.surrogate.mean, o.baseline.mean
                );
            }
        }
        Command::ExportActivations { model, data, layer } => {
            let edges = commands::export_activations(
                &cfg,
                &or_default(&cfg, model, files::MODEL),
                &or_default(&cfg, data, files::TRAIN),
                layer.unwrap_or(cfg.interpret.layer),
            )?;
            println!(
                "{} edge tables in {}",
                edges.len(),
                at(files::ACTIVATIONS_DIR).display()
            );
        }
        Command::Symbolic { model, data } => {
            let report = commands::symbolic(
                &cfg,
                &or_default(&cfg, model, files::MODEL),
                &or_default(&cfg, data, files::TRAIN),
            )?;
            for f in report.fits.iter().take(10) {
                println!(
                    "layer {} edge {}->{}: {} (r2 {:.4}, importance {:.3e})",
                    f.layer,
                    f.input,
                    f.output,
                    f.fit.candidate.name(),
                    f.fit.r_squared,
                    f.importance
                );
            }
            println!("{} edges fitted, {} skipped", report.fits.len(), report.skipped.len());
        }
        Command::Prune { model, data } => {
            let s = commands::prune(
                &cfg,
                &or_default(&cfg, model, files::MODEL),
                &or_default(&cfg, data, files::TRAIN),
            )?;
            println!(
                "kept {} of {} edges -> {}",
                s.kept,
                s.total,
                Path::new(&at(files::PRUNED_MODEL)).display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
