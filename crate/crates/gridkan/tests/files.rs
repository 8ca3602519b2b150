use std::path::Path;

use gridkan::case::{case_to_string, load_case, parse_case};
use gridkan::model::{ModelFile, Provenance};
use gridkan::PipelineConfig;
use gridkan_core::acdc::builtin_case5;
use gridkan_core::opf::OutputSpec;
use gridkan_core::surrogate::{InputScaler, Surrogate, TargetScaler};
use gridkan_core::{KanInit, KanNetwork, TrainConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn crate_file(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

#[test]
fn shipped_case_matches_the_builtin() {
    assert_eq!(load_case(&crate_file("cases/case5.toml")).unwrap(), builtin_case5());
}

#[test]
fn shipped_configs_load() {
    for name in ["configs/case5.toml", "configs/quick.toml"] {
        let cfg = PipelineConfig::load(&crate_file(name)).unwrap();
        assert_eq!(cfg.system().unwrap(), builtin_case5(), "{name}");
    }
}

#[test]
fn case_errors_name_the_file_and_line() {
    let src = case_to_string(&builtin_case5()).replace("base_mva = 100.0", "base_mva = \"big\"");
    let err = parse_case(&src, "grid.toml").unwrap_err().to_string();
    assert!(err.starts_with("grid.toml:"), "{err}");
}

fn model(widths: &[usize], seed: u64, noise: f64) -> ModelFile {
    let init = KanInit {
        seed,
        init_noise: noise,
        ..KanInit::default()
    };
    let network = KanNetwork::new(widths, &init).unwrap();
    let n_in = widths[0];
    let n_out = widths[widths.len() - 1];
    let surrogate = Surrogate {
        network,
        inputs: InputScaler {
            lo: vec![0.7; n_in],
            hi: vec![1.3; n_in],
        },
        targets: TargetScaler {
            mean: (0..n_out).map(|j| 1.0 / (j as f64 + 3.0)).collect(),
            std: vec![0.1; n_out],
        },
        feature_names: (0..n_in).map(|i| format!("x{i}")).collect(),
        target_names: (0..n_out).map(|j| format!("y{j}")).collect(),
    };
    let outputs = OutputSpec {
        outputs: OutputSpec::case5_default().outputs[..n_out].to_vec(),
    };
    let provenance = Provenance {
        seed,
        init,
        train: TrainConfig::default(),
        steps: 0,
        data_hash: String::new(),
        scenario_fingerprint: String::new(),
        prune_threshold: None,
    };
    ModelFile::new(surrogate, &outputs, provenance)
}

#[test]
fn model_file_round_trip_is_bit_exact() {
    let m = model(&[4, 5, 5, 5], 11, 0.3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    m.save(&path).unwrap();
    let back = ModelFile::load(&path).unwrap();
    assert_eq!(back, m);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(0.5..1.5)).collect();
        let a = m.surrogate.predict(&x).unwrap();
        let b = back.surrogate.predict(&x).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    m.save(&dir.path().join("again.json")).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(dir.path().join("again.json")).unwrap()
    );
}

#[test]
fn tampered_models_are_rejected() {
    let m = model(&[2, 3, 1], 1, 0.1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let mut bad = m.clone();
    bad.output_fingerprint = "00".into();
    bad.save(&path).unwrap();
    assert!(ModelFile::load(&path).is_err());
    let missing = ModelFile::load(&dir.path().join("none.json")).unwrap_err();
    assert_eq!(missing.exit_code(), 4);
    assert!(missing.to_string().contains("none.json"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn saved_models_predict_identically(
        hidden in prop::collection::vec(1usize..5, 0..3),
        seed in any::<u64>(),
        noise in 0.0f64..1.0,
        x in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let mut widths = vec![3];
        widths.extend(hidden);
        widths.push(2);
        let m = model(&widths, seed, noise);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let back = ModelFile::load(&path).unwrap();
        let a = m.surrogate.predict(&x).unwrap();
        let b = back.surrogate.predict(&x).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}
