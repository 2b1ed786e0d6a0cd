//! End-to-end data-path tests: manifests, the synthetic generator's
//! separability guarantee, bank round-trips, provider polymorphism, and
//! the embedding plot.

mod common;

use common::*;
use fer_core::bank::{build_bank, format_bank, load_bank, parse_bank, save_bank};
use fer_core::category::CategorySet;
use fer_core::encoder::{encode, LinearEncoder, Projection, TransformNetwork};
use fer_core::eval::predict_reps;
use fer_core::manifest::{load_dataset, load_manifest, save_manifest};
use fer_core::nn::Activation;
use fer_core::plot::{emit_embedding_plot, PlotError};
use fer_core::prompts::PromptTemplate;
use fer_core::provider::{CommandProvider, EmbeddingProvider, ProviderError, StubProvider};
use fer_core::synthetic::{dataset_checksums, generate_synthetic};
use fer_core::train::{Model, ModelSpec};
use ndarray::Array2;
use rand::Rng;

#[test]
fn manifest_round_trip_preserves_rows_and_categories() {
    let dir = tempfile::tempdir().unwrap();
    let names = names_with_neutral(3);
    let manifest = synthetic_fixture(&dir.path().join("data"), &names, 3, 32, 1);
    let copy_dir = dir.path().join("copy");
    // the copy directory has no images, so round-trip through the parser only
    let csv = save_manifest(&manifest, &copy_dir).unwrap();
    let text = std::fs::read_to_string(csv).unwrap();
    let rows = fer_core::manifest::parse_manifest_csv(&text, &manifest.categories).unwrap();
    assert_eq!(rows, manifest.rows);
    // and fully through load_manifest where the images exist
    let reloaded = load_manifest(&dir.path().join("data").join("manifest.csv")).unwrap();
    assert_eq!(reloaded.rows, manifest.rows);
    assert_eq!(reloaded.categories, manifest.categories);
}

/// Gaussian elimination with partial pivoting; the independent linear
/// solver behind the separability oracle.
fn solve_linear(mut a: Array2<f64>, mut b: Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))
            .unwrap();
        if pivot != col {
            for k in 0..n {
                let tmp = a[[col, k]];
                a[[col, k]] = a[[pivot, k]];
                a[[pivot, k]] = tmp;
            }
            for k in 0..b.ncols() {
                let tmp = b[[col, k]];
                b[[col, k]] = b[[pivot, k]];
                b[[pivot, k]] = tmp;
            }
        }
        let diag = a[[col, col]];
        for row in (col + 1)..n {
            let factor = a[[row, col]] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[[row, k]] -= factor * a[[col, k]];
            }
            for k in 0..b.ncols() {
                b[[row, k]] -= factor * b[[col, k]];
            }
        }
    }
    let mut x = Array2::<f64>::zeros(b.raw_dim());
    for col in (0..n).rev() {
        for k in 0..b.ncols() {
            let mut acc = b[[col, k]];
            for j in (col + 1)..n {
                acc -= a[[col, j]] * x[[j, k]];
            }
            x[[col, k]] = acc / a[[col, col]];
        }
    }
    x
}

#[test]
fn synthetic_classes_are_linearly_separable_on_raw_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let names: Vec<String> = fer_core::category::DEFAULT_CATEGORIES
        .iter()
        .map(|s| s.to_string())
        .collect();
    let manifest = synthetic_fixture(dir.path(), &names, 50, 32, 77);
    let dataset = load_dataset(&manifest).unwrap();
    let n = dataset.len();
    let d = 3 * 32 * 32;
    let c = names.len();
    let mut x = Array2::<f64>::zeros((n, d));
    let mut y = Array2::<f64>::zeros((n, c));
    for (i, sample) in dataset.samples.iter().enumerate() {
        for (j, &v) in sample.image.iter().enumerate() {
            x[[i, j]] = v;
        }
        y[[i, sample.label]] = 1.0;
    }
    // dual ridge regression: (XX^T + lambda I) alpha = Y, scores = XX^T alpha
    let gram = x.dot(&x.t());
    let mut regularized = gram.clone();
    for i in 0..n {
        regularized[[i, i]] += 1e-3;
    }
    let alpha = solve_linear(regularized, y);
    let scores = gram.dot(&alpha);
    let mut correct = 0usize;
    for (i, sample) in dataset.samples.iter().enumerate() {
        let row = scores.row(i);
        let mut best = 0;
        for (ix, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = ix;
            }
        }
        if best == sample.label {
            correct += 1;
        }
    }
    let accuracy = correct as f64 / n as f64;
    assert!(accuracy >= 0.90, "train accuracy {accuracy}");
}

#[test]
fn regenerating_with_same_seed_reproduces_checksums() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let cats = CategorySet::new(["happiness", "sadness", "neutral"]).unwrap();
    let a = generate_synthetic(&cats, 5, 64, 123, dir_a.path()).unwrap();
    let b = generate_synthetic(&cats, 5, 64, 123, dir_b.path()).unwrap();
    assert_eq!(dataset_checksums(&a).unwrap(), dataset_checksums(&b).unwrap());
}

#[test]
fn downstream_operations_are_shape_polymorphic_in_embedding_dimension() {
    let names = names_with_neutral(4);
    for &d_t in &[16usize, 512] {
        let bank = stub_bank(&names, d_t, 3);
        assert_eq!(bank.dim(), d_t);
        let mut rng = seeded(4);
        // encoder with d_v = 512 feeding a projection into d_t
        let encoder = LinearEncoder::new(32, 512, &mut rng);
        let projection = Projection::new(512, d_t, &mut rng);
        let images = {
            let data: Vec<f64> = (0..2 * 3 * 32 * 32).map(|_| rng.gen_range(0.0..1.0)).collect();
            ndarray::Array4::from_shape_vec((2, 3, 32, 32), data).unwrap()
        };
        let reps = encode(&encoder, &projection, &images).unwrap();
        assert_eq!(reps.dim(), (2, d_t));
        let transform = TransformNetwork::new(d_t, Activation::Relu, &mut rng);
        let neutral = transform.forward(&reps);
        assert_eq!(neutral.dim(), (2, d_t));
        let labels = vec![0usize, 1];
        let result = fer_core::losses::total_loss(
            &bank,
            &reps,
            Some(&neutral),
            &labels,
            &fer_core::config::LossConfig {
                tau: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(result.total.is_finite());
        let preds = predict_reps(&bank, &reps).unwrap();
        assert_eq!(preds.len(), 2);
    }
}

#[test]
fn bank_file_round_trip_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let names = names_with_neutral(6);
    let bank = stub_bank(&names, 24, 9);
    let path = dir.path().join("bank.teb");
    save_bank(&bank, &path).unwrap();
    let loaded = load_bank(&path).unwrap();
    let mut rng = seeded(10);
    let reps = random_unit_offset_matrix(&mut rng, 40, 24);
    assert_eq!(
        predict_reps(&bank, &reps).unwrap(),
        predict_reps(&loaded, &reps).unwrap()
    );
    // serialization is stable: saving the load reproduces the bytes
    assert_eq!(format_bank(&loaded), std::fs::read_to_string(&path).unwrap());
}

#[test]
fn bank_parser_never_panics_on_mangled_input() {
    let names = names_with_neutral(3);
    let bank = stub_bank(&names, 8, 0);
    let good = format_bank(&bank);
    let mut rng = seeded(31);
    for _ in 0..500 {
        let mut bytes = good.clone().into_bytes();
        for _ in 0..rng.gen_range(1..10) {
            let ix = rng.gen_range(0..bytes.len());
            bytes[ix] = rng.gen_range(0..=255);
        }
        if let Ok(text) = String::from_utf8(bytes) {
            let _ = parse_bank(&text);
        }
    }
}

#[test]
fn file_provider_reserves_the_original_embeddings() {
    let names = names_with_neutral(3);
    let bank = stub_bank(&names, 16, 5);
    let provider = fer_core::provider::FileProvider::from_bank(&bank);
    let rebuilt = build_bank(&provider, bank.template(), bank.categories()).unwrap();
    assert_eq!(rebuilt.matrix(), bank.matrix());
    assert_eq!(rebuilt.provider_id(), bank.provider_id());
    // unknown prompt fails with the prompt named
    let err = provider.embed(&["unseen prompt".to_string()]).unwrap_err();
    assert!(matches!(err, ProviderError::Failed { .. }));
}

#[test]
fn command_provider_round_trips_through_a_subprocess() {
    let dir = tempfile::tempdir().unwrap();
    // a fixed fake encoder: emits "<line length> 1 2" per prompt
    let script = dir.path().join("fake_encoder.sh");
    std::fs::write(
        &script,
        "#!/bin/sh\nwhile IFS= read -r line; do printf '%s 1.0 2.0\\n' \"${#line}\"; done\n",
    )
    .unwrap();
    std::process::Command::new("chmod")
        .arg("+x")
        .arg(&script)
        .status()
        .unwrap();
    let provider = CommandProvider::new(&script, vec![]);
    let categories = CategorySet::new(["happiness", "anger", "neutral"]).unwrap();
    let bank = build_bank(&provider, &PromptTemplate::default(), &categories).unwrap();
    assert_eq!(bank.dim(), 3);
    assert_eq!(bank.n_categories(), 3);
    assert!(bank.provider_id().starts_with("vlm-"));
    // prompts differ in length, so first components differ
    assert_ne!(bank.column(0)[0], bank.column(2)[0]);

    let failing = CommandProvider::new("/bin/false", vec![]);
    let err = failing.embed(&["x".to_string()]).unwrap_err();
    assert!(matches!(err, ProviderError::Failed { .. }));
}

#[test]
fn embedding_plot_writes_deterministic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let names = names_with_neutral(6);
    let manifest = synthetic_fixture(&dir.path().join("data"), &names, 10, 32, 41);
    let model = Model::new_text(
        &ModelSpec {
            encoder_id: "linear".into(),
            fn_activation: Activation::Relu,
        },
        32,
        16,
        0,
    )
    .unwrap();
    let (png_a, csv_a) = emit_embedding_plot(&model, &manifest, 7, &dir.path().join("plot_a")).unwrap();
    assert!(png_a.is_file());
    let text_a = std::fs::read_to_string(&csv_a).unwrap();
    assert_eq!(text_a.lines().count(), 71); // header + 70 samples
    let (_, csv_b) = emit_embedding_plot(&model, &manifest, 7, &dir.path().join("plot_b")).unwrap();
    assert_eq!(text_a, std::fs::read_to_string(csv_b).unwrap());

    // empty manifest is an error, not a degenerate plot
    let empty = fer_core::manifest::DatasetManifest {
        rows: vec![],
        root: dir.path().to_path_buf(),
        categories: manifest.categories.clone(),
    };
    assert!(matches!(
        emit_embedding_plot(&model, &empty, 7, &dir.path().join("plot_c")),
        Err(PlotError::EmptyDataset)
    ));
}
