//! Shared test support: independent scalar oracles for every loss, a
//! central-difference gradient checker, and fixture builders.
//!
//! The oracles are deliberately written as naive per-sample loops over
//! `Vec<f64>` so they share no code path with the vectorized
//! implementations they check.

#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fer_core::bank::{build_bank, TextEmbeddingBank};
use fer_core::category::CategorySet;
use fer_core::prompts::PromptTemplate;
use fer_core::provider::StubProvider;

// ---------------------------------------------------------------------------
// scalar oracles

pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Per-sample softmax cross-entropy over cosine/tau scores, written with
/// literal exp sums.
pub fn oracle_loss_s(
    bank_columns: &[Vec<f64>],
    reps: &[Vec<f64>],
    labels: &[usize],
    tau: f64,
) -> f64 {
    let mut total = 0.0;
    for (rep, &label) in reps.iter().zip(labels) {
        let scores: Vec<f64> = bank_columns
            .iter()
            .map(|col| oracle_cosine(col, rep) / tau)
            .collect();
        let denom: f64 = scores.iter().map(|s| s.exp()).sum();
        let p = scores[label].exp() / denom;
        total += -p.ln();
    }
    total / reps.len() as f64
}

pub fn oracle_loss_t(delta_t: &[Vec<f64>], delta_v: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (dt, dv) in delta_t.iter().zip(delta_v) {
        total += 1.0 - oracle_cosine(dt, dv);
    }
    total / delta_t.len() as f64
}

pub fn oracle_loss_c_self(
    t: &[Vec<f64>],
    v: &[Vec<f64>],
    n: &[Vec<f64>],
    gamma: f64,
) -> f64 {
    let mut total = 0.0;
    for i in 0..t.len() {
        total += oracle_cosine(&t[i], &n[i]) - oracle_cosine(&t[i], &v[i]) + gamma;
    }
    total / t.len() as f64
}

pub fn oracle_loss_c_info_nce(
    t: &[Vec<f64>],
    v: &[Vec<f64>],
    n: &[Vec<f64>],
    tau: f64,
) -> f64 {
    let mut total = 0.0;
    for i in 0..t.len() {
        let sv = (oracle_cosine(&t[i], &v[i]) / tau).exp();
        let sn = (oracle_cosine(&t[i], &n[i]) / tau).exp();
        total += -(sv / (sv + sn)).ln();
    }
    total / t.len() as f64
}

// ---------------------------------------------------------------------------
// conversions and random fixtures

pub fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn bank_columns(bank: &TextEmbeddingBank) -> Vec<Vec<f64>> {
    (0..bank.n_categories())
        .map(|c| bank.column(c).to_vec())
        .collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Array2::from_shape_vec((rows, cols), data).unwrap()
}

/// Random matrix whose rows are guaranteed non-degenerate.
pub fn random_unit_offset_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let mut m = random_matrix(rng, rows, cols);
    for mut row in m.rows_mut() {
        let norm: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-3 {
            row[0] += 1.0;
        }
    }
    m
}

/// Category names `class0..classN` with a trailing neutral.
pub fn names_with_neutral(n_non_neutral: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..n_non_neutral).map(|i| format!("class{i}")).collect();
    names.push("neutral".into());
    names
}

pub fn stub_bank(names: &[String], d_t: usize, seed: u64) -> TextEmbeddingBank {
    let categories = CategorySet::new(names).unwrap();
    let provider = StubProvider::new(d_t, seed);
    build_bank(&provider, &PromptTemplate::default(), &categories).unwrap()
}

// ---------------------------------------------------------------------------
// gradient checking

/// Central-difference gradient of a scalar function of a matrix.
pub fn finite_difference_grad(
    f: &mut dyn FnMut(&Array2<f64>) -> f64,
    at: &Array2<f64>,
    step: f64,
) -> Array2<f64> {
    let mut grad = Array2::<f64>::zeros(at.raw_dim());
    for i in 0..at.nrows() {
        for j in 0..at.ncols() {
            let mut plus = at.clone();
            plus[[i, j]] += step;
            let mut minus = at.clone();
            minus[[i, j]] -= step;
            grad[[i, j]] = (f(&plus) - f(&minus)) / (2.0 * step);
        }
    }
    grad
}

/// Norm-relative error between analytic and finite-difference gradients.
pub fn gradient_relative_error(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = analytic
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(numeric.iter().map(|x| x * x).sum::<f64>().sqrt())
        .max(1e-12);
    diff / scale
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// dataset and config fixtures

use fer_core::config::TrainConfig;
use fer_core::manifest::DatasetManifest;
use fer_core::synthetic::generate_synthetic;
use std::path::Path;

pub fn synthetic_fixture(
    dir: &Path,
    names: &[String],
    per_class: usize,
    size: usize,
    seed: u64,
) -> DatasetManifest {
    let categories = CategorySet::new(names).unwrap();
    generate_synthetic(&categories, per_class, size, seed, dir).unwrap()
}

/// Small fast training config for deterministic fixtures: augmentation
/// off, short schedule.
pub fn fast_train_config(epochs: usize, batch_size: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size,
        learning_rate: 0.05,
        momentum: 0.9,
        weight_decay: 5e-4,
        warmup_fraction: 0.1,
        augment: false,
        seed,
        ..TrainConfig::default()
    }
}
