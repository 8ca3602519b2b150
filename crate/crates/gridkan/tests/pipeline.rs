use std::path::{Path, PathBuf};

use gridkan::commands::{self, files};
use gridkan::table::Table;
use gridkan::{CliError, PipelineConfig};
use gridkan_core::distribution::compare;
use gridkan_core::interpret::Candidate;

fn config(dir: &Path, extra: &str) -> PipelineConfig {
    let src = format!(
        "schema_version = 1\nseed = 5\nout_dir = {:?}\n\n[data]\nn_train = 60\nn_test = 30\n\n\
         [model]\nwidths = [4, 3, 5]\n\n[train]\nsteps = 40\neval_every = 10\n\n\
         [sweep]\nsizes = [20, 60]\nwidths = [[4, 3, 5], [4, 5]]\n{extra}",
        dir.display().to_string()
    );
    PipelineConfig::parse(&src, "test.toml", PathBuf::new()).unwrap()
}

fn at(cfg: &PipelineConfig, name: &str) -> PathBuf {
    commands::out_path(cfg, name)
}

fn all_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn run_all(cfg: &PipelineConfig) {
    commands::gen_data(cfg).unwrap();
    commands::train(cfg, &at(cfg, files::TRAIN), &at(cfg, files::TEST)).unwrap();
    commands::compare(cfg, &at(cfg, files::MODEL), &at(cfg, files::TEST)).unwrap();
    commands::export_activations(cfg, &at(cfg, files::MODEL), &at(cfg, files::TRAIN), 0).unwrap();
    commands::symbolic(cfg, &at(cfg, files::MODEL), &at(cfg, files::TRAIN)).unwrap();
    commands::prune(cfg, &at(cfg, files::MODEL), &at(cfg, files::TRAIN)).unwrap();
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_all(&config(a.path(), ""));
    run_all(&config(b.path(), ""));
    let fa = all_files(a.path());
    assert!(fa.len() > 10);
    assert_eq!(fa, all_files(b.path()));
}

#[test]
fn generated_data_and_tables_reparse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let data = commands::gen_data(&cfg).unwrap();
    assert_eq!(data.train.len(), 60);
    assert_eq!(data.test.len(), 30);
    assert_ne!(data.train_meta.seed, data.test_meta.seed);
    assert_ne!(data.train.input_row(0), data.test.input_row(0));
    let (back, _) = commands::load_dataset(&cfg, &at(&cfg, files::TRAIN)).unwrap();
    assert_eq!(back, data.train);

    let t = commands::train(&cfg, &at(&cfg, files::TRAIN), &at(&cfg, files::TEST)).unwrap();
    let curve = Table::read(&at(&cfg, files::LOSS_CURVE)).unwrap();
    assert_eq!(curve.header, ["step", "train_mse_std", "test_rmse_std"]);
    assert_eq!(curve.numeric_column("step").unwrap(), [10.0, 20.0, 30.0, 40.0]);
    assert_eq!(curve.numeric_column("test_rmse_std").unwrap(), t.report.test_rmse);

    commands::compare(&cfg, &at(&cfg, files::MODEL), &at(&cfg, files::TEST)).unwrap();
    let dir_c = at(&cfg, files::COMPARE_DIR);
    for name in ["objective", "gen1_p", "gen2_p", "bus4_v", "conv2_p"] {
        let pdf = Table::read(&dir_c.join(format!("pdf_{name}.csv"))).unwrap();
        let lo = pdf.numeric_column("bin_lo").unwrap();
        let hi = pdf.numeric_column("bin_hi").unwrap();
        for col in ["baseline_density", "surrogate_density"] {
            let d = pdf.numeric_column(col).unwrap();
            let mass: f64 = d.iter().zip(lo.iter().zip(&hi)).map(|(d, (l, h))| d * (h - l)).sum();
            assert!((mass - 1.0).abs() < 1e-9, "{name} {col}: {mass}");
        }
        let cdf = Table::read(&dir_c.join(format!("cdf_{name}.csv"))).unwrap();
        let base = cdf.numeric_column("baseline_cdf").unwrap();
        assert!(base.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*base.last().unwrap(), 1.0);
    }
    let summary = Table::read(&dir_c.join("summary.csv")).unwrap();
    assert_eq!(summary.rows.len(), 5);
}

#[test]
fn single_row_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let src = format!(
        "schema_version = 1\nout_dir = {:?}\n[data]\nn_train = 1\nn_test = 1\n[model]\nwidths = [4, 5]\n\
         [train]\nsteps = 5\neval_every = 5\n",
        dir.path().display().to_string()
    );
    let cfg = PipelineConfig::parse(&src, "one.toml", PathBuf::new()).unwrap();
    let data = commands::gen_data(&cfg).unwrap();
    assert_eq!(data.train.len(), 1);
    let text = std::fs::read_to_string(at(&cfg, files::TRAIN)).unwrap();
    assert_eq!(text.lines().count(), 2);
    commands::train(&cfg, &at(&cfg, files::TRAIN), &at(&cfg, files::TEST)).unwrap();
    let report = commands::compare(&cfg, &at(&cfg, files::MODEL), &at(&cfg, files::TEST)).unwrap();
    assert_eq!(report.samples, 1);
}

#[test]
fn mismatched_widths_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    commands::gen_data(&cfg).unwrap();
    let mut wrong = cfg.clone();
    wrong.model.widths = vec![3, 5];
    let err = commands::train(&wrong, &at(&cfg, files::TRAIN), &at(&cfg, files::TEST)).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let err = commands::compare(&cfg, &dir.path().join("absent.json"), &at(&cfg, files::TEST)).unwrap_err();
    assert!(matches!(err, CliError::Io { .. }));
    assert!(err.to_string().contains("absent.json"));
}

#[test]
fn outputs_mismatch_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    commands::gen_data(&cfg).unwrap();
    commands::train(&cfg, &at(&cfg, files::TRAIN), &at(&cfg, files::TEST)).unwrap();
    let mut other = cfg.clone();
    other.outputs.swap(1, 2);
    let err = commands::compare(&other, &at(&cfg, files::MODEL), &at(&cfg, files::TEST)).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("outputs"), "{err}");
}

#[test]
fn self_comparison_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let data = commands::gen_data(&cfg).unwrap();
    let report = compare(&data.test, &data.test, 0.95, 10).unwrap();
    assert_eq!(report.pointwise_rmse, 0.0);
    assert!(report.outputs.iter().all(|o| o.ks == 0.0 && o.rmse == 0.0));
}

#[test]
fn sweep_table_and_single_cell_consistency() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    commands::gen_data(&cfg).unwrap();
    let rows = commands::sweep(&cfg, &at(&cfg, files::TRAIN), &at(&cfg, files::TEST)).unwrap();
    assert_eq!(rows.len(), 4);
    let table = Table::read(&at(&cfg, files::SWEEP)).unwrap();
    assert_eq!(table.rows.len(), 4);
    assert!(table.header.contains(&"test_rmse_std_gen1_p".to_string()));

    let mut single = cfg.clone();
    single.sweep.sizes = vec![60];
    single.sweep.widths = vec![cfg.model.widths.clone()];
    let cell = commands::sweep(&single, &at(&cfg, files::TRAIN), &at(&cfg, files::TEST)).unwrap();
    let trained = commands::train(&cfg, &at(&cfg, files::TRAIN), &at(&cfg, files::TEST)).unwrap();
    assert_eq!(cell[0].final_train_mse, trained.report.final_train_mse);
    assert_eq!(cell[0].final_test_rmse, trained.report.final_test_rmse().unwrap());

    let mut too_big = cfg.clone();
    too_big.sweep.sizes = vec![20, 1000];
    too_big.sweep.widths = vec![vec![4, 5]];
    let rows = commands::sweep(&too_big, &at(&cfg, files::TRAIN), &at(&cfg, files::TEST)).unwrap();
    assert!(rows[0].is_ok());
    assert!(!rows[1].is_ok() && rows[1].status.contains("1000"));
}

#[test]
fn activation_tables_cover_every_first_layer_edge() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    commands::gen_data(&cfg).unwrap();
    commands::train(&cfg, &at(&cfg, files::TRAIN), &at(&cfg, files::TEST)).unwrap();
    let edges = commands::export_activations(&cfg, &at(&cfg, files::MODEL), &at(&cfg, files::TRAIN), 0).unwrap();
    assert_eq!(edges.len(), 4 * 3);
    let tables = std::fs::read_dir(at(&cfg, files::ACTIVATIONS_DIR)).unwrap().count();
    assert_eq!(tables, 12);
    for e in &edges {
        assert!(e.x.windows(2).all(|w| w[0] < w[1]));
    }
    let err = commands::export_activations(&cfg, &at(&cfg, files::MODEL), &at(&cfg, files::TRAIN), 7).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn zero_noise_twin_is_the_base_term() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let mut zero = cfg.clone();
    zero.model.init_noise = 0.0;
    commands::gen_data(&zero).unwrap();
    let t = commands::train(&zero, &at(&zero, files::TRAIN), &at(&zero, files::TEST)).unwrap();
    let edges = commands::export_activations(&zero, &at(&zero, files::MODEL), &at(&zero, files::TRAIN), 0).unwrap();
    let base_weight = t.model.provenance.init.base_weight.unwrap_or(1.0 / 2.0);
    for e in &edges {
        for (x, b) in e.x.iter().zip(&e.before) {
            let silu = x / (1.0 + (-x).exp());
            assert!((b - base_weight * silu).abs() < 1e-12);
        }
    }
}

#[test]
fn symbolic_fit_of_a_linear_relation() {
    let dir = tempfile::tempdir().unwrap();
    let src = format!(
        "schema_version = 1\nout_dir = {:?}\noutputs = [{{ kind = \"gen-p\", gen = 2 }}]\n\
         [data]\nn_train = 80\nn_test = 20\n[sweep]\nwidths = [[4, 1]]\n[uncertainty]\nnames = [\"a\", \"b\", \"c\", \"solar\"]\nmarginals = [\n\
         {{ kind = \"uniform\", lo = 0.8, hi = 1.2 }},\n{{ kind = \"uniform\", lo = 0.9999, hi = 1.0001 }},\n\
         {{ kind = \"uniform\", lo = 0.9999, hi = 1.0001 }},\n{{ kind = \"uniform\", lo = 0.4999, hi = 0.5001 }},\n]\n\
         [model]\nwidths = [4, 1]\n[train]\nsteps = 300\neval_every = 50\n",
        dir.path().display().to_string()
    );
    let cfg = PipelineConfig::parse(&src, "lin.toml", PathBuf::new());
    let Ok(cfg) = cfg else {
        panic!("{}", cfg.unwrap_err());
    };
    commands::gen_data(&cfg).unwrap();
    commands::train(&cfg, &at(&cfg, files::TRAIN), &at(&cfg, files::TEST)).unwrap();
    let report = commands::symbolic(&cfg, &at(&cfg, files::MODEL), &at(&cfg, files::TRAIN)).unwrap();
    let top = &report.fits[0];
    assert_eq!((top.layer, top.input), (0, 0));
    assert!(top.fit.r_squared > 0.999, "{top:?}");
    assert_eq!(top.fit.candidate, Candidate::Linear, "{top:?}");
}

#[test]
fn pruned_edges_are_skipped_by_symbolic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    commands::gen_data(&cfg).unwrap();
    commands::train(&cfg, &at(&cfg, files::TRAIN), &at(&cfg, files::TEST)).unwrap();
    commands::prune(&cfg, &at(&cfg, files::MODEL), &at(&cfg, files::TRAIN)).unwrap();
    let mut scores = Table::read(&at(&cfg, files::PRUNE))
        .unwrap()
        .numeric_column("importance")
        .unwrap();
    scores.sort_by(f64::total_cmp);
    let median = scores[scores.len() / 2];
    let cfg = config(dir.path(), &format!("\n[interpret]\nprune_threshold = {median}\n"));
    let pruned = commands::prune(&cfg, &at(&cfg, files::MODEL), &at(&cfg, files::TRAIN)).unwrap();
    assert!(pruned.kept < pruned.total, "threshold removed nothing");
    assert!(pruned.kept > 0);
    let report = commands::symbolic(&cfg, &at(&cfg, files::PRUNED_MODEL), &at(&cfg, files::TRAIN)).unwrap();
    assert_eq!(report.fits.len(), pruned.kept);
    assert_eq!(report.skipped.len(), pruned.total - pruned.kept);
    assert!(report.fits.windows(2).all(|w| w[0].importance >= w[1].importance));
    let rows = Table::read(&at(&cfg, files::SYMBOLIC)).unwrap().rows.len();
    assert_eq!(rows, pruned.kept);
}
