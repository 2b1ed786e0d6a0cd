//! Property and oracle-equivalence tests for the loss module.

mod common;

use common::*;
use fer_core::config::{ContrastVariant, LossConfig};
use fer_core::losses::{
    cosine_similarity, loss_c_info_nce, loss_c_info_nce_with_grad, loss_c_self_contrast,
    loss_c_self_contrast_with_grad, loss_s, loss_s_with_grad, loss_t, loss_t_with_grad,
    similarity_logits, total_loss, total_loss_with_grad,
};
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn vectorized_loss_s_matches_scalar_oracle_on_100_batches() {
    let names = names_with_neutral(6);
    for trial in 0..100u64 {
        let mut rng = seeded(1000 + trial);
        let d_t = if trial % 2 == 0 { 16 } else { 24 };
        let bank = stub_bank(&names, d_t, trial);
        let b = rng.gen_range(1..=8);
        let reps = random_unit_offset_matrix(&mut rng, b, d_t);
        let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..names.len())).collect();
        let tau = rng.gen_range(0.05..2.0);
        let fast = loss_s(&bank, &reps, &labels, tau).unwrap();
        let slow = oracle_loss_s(&bank_columns(&bank), &to_rows(&reps), &labels, tau);
        assert!(
            (fast - slow).abs() <= 1e-6,
            "trial {trial}: {fast} vs oracle {slow}"
        );
    }
}

#[test]
fn total_loss_matches_summed_per_loss_oracles() {
    let names = names_with_neutral(4);
    for trial in 0..100u64 {
        let mut rng = seeded(7000 + trial);
        let d_t = 12;
        let bank = stub_bank(&names, d_t, trial);
        let b = rng.gen_range(1..=8);
        let reps = random_unit_offset_matrix(&mut rng, b, d_t);
        let neutral = random_unit_offset_matrix(&mut rng, b, d_t);
        let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..names.len())).collect();
        let cfg = LossConfig {
            tau: rng.gen_range(0.1..1.5),
            gamma: 2.0,
            lambda_s: rng.gen_range(0.0..2.0),
            lambda_t: rng.gen_range(0.0..2.0),
            lambda_c: rng.gen_range(0.0..2.0),
            contrast_variant: ContrastVariant::SelfContrast,
            hinge: false,
        };
        let result = total_loss(&bank, &reps, Some(&neutral), &labels, &cfg).unwrap();

        // independent assembly from scalar oracles
        let cols = bank_columns(&bank);
        let neutral_col = names.len() - 1;
        let l_s = oracle_loss_s(&cols, &to_rows(&reps), &labels, cfg.tau);
        let selected: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != neutral_col)
            .map(|(i, _)| i)
            .collect();
        let mut expected = cfg.lambda_s * l_s;
        if !selected.is_empty() {
            let reps_rows = to_rows(&reps);
            let neutral_rows = to_rows(&neutral);
            let t_rows: Vec<Vec<f64>> = selected.iter().map(|&i| cols[labels[i]].clone()).collect();
            let v_rows: Vec<Vec<f64>> = selected.iter().map(|&i| reps_rows[i].clone()).collect();
            let n_rows: Vec<Vec<f64>> = selected.iter().map(|&i| neutral_rows[i].clone()).collect();
            let dt_rows: Vec<Vec<f64>> = t_rows
                .iter()
                .map(|t| t.iter().zip(&cols[neutral_col]).map(|(a, b)| a - b).collect())
                .collect();
            let dv_rows: Vec<Vec<f64>> = v_rows
                .iter()
                .zip(&n_rows)
                .map(|(v, n)| v.iter().zip(n).map(|(a, b)| a - b).collect())
                .collect();
            expected += cfg.lambda_t * oracle_loss_t(&dt_rows, &dv_rows);
            expected += cfg.lambda_c * oracle_loss_c_self(&t_rows, &v_rows, &n_rows, cfg.gamma);
            assert_eq!(result.n_e, selected.len());
        } else {
            assert!(result.l_t.is_none() && result.l_c.is_none());
        }
        assert!(
            (result.total - expected).abs() <= 1e-6,
            "trial {trial}: {} vs oracle {expected}",
            result.total
        );
    }
}

#[test]
fn hand_built_two_sample_batch_matches_oracle_sum() {
    let names = names_with_neutral(2);
    let bank = stub_bank(&names, 8, 3);
    let mut rng = seeded(42);
    let reps = random_unit_offset_matrix(&mut rng, 2, 8);
    let neutral = random_unit_offset_matrix(&mut rng, 2, 8);
    let labels = vec![0usize, 1];
    let cfg = LossConfig {
        tau: 0.7,
        lambda_s: 1.0,
        lambda_t: 1.0,
        lambda_c: 1.0,
        ..LossConfig::default()
    };
    let result = total_loss(&bank, &reps, Some(&neutral), &labels, &cfg).unwrap();
    let cols = bank_columns(&bank);
    let l_s = oracle_loss_s(&cols, &to_rows(&reps), &labels, cfg.tau);
    let t_rows = vec![cols[0].clone(), cols[1].clone()];
    let v_rows = to_rows(&reps);
    let n_rows = to_rows(&neutral);
    let dt: Vec<Vec<f64>> = t_rows
        .iter()
        .map(|t| t.iter().zip(&cols[2]).map(|(a, b)| a - b).collect())
        .collect();
    let dv: Vec<Vec<f64>> = v_rows
        .iter()
        .zip(&n_rows)
        .map(|(v, n)| v.iter().zip(n).map(|(a, b)| a - b).collect())
        .collect();
    let expected =
        l_s + oracle_loss_t(&dt, &dv) + oracle_loss_c_self(&t_rows, &v_rows, &n_rows, 2.0);
    assert!((result.total - expected).abs() <= 1e-6);
}

// ---------------------------------------------------------------------------
// range properties

#[test]
fn ranges_hold_over_random_inputs() {
    let names = names_with_neutral(6);
    let bank = stub_bank(&names, 16, 0);
    let mut rng = seeded(99);
    for _ in 0..1000 {
        let b = rng.gen_range(1..=6);
        let reps = random_unit_offset_matrix(&mut rng, b, 16);
        let other = random_unit_offset_matrix(&mut rng, b, 16);
        let anchors = random_unit_offset_matrix(&mut rng, b, 16);
        let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..names.len())).collect();

        let cos = cosine_similarity(reps.row(0), other.row(0)).unwrap();
        assert!((-1.0..=1.0).contains(&cos));

        let ls = loss_s(&bank, &reps, &labels, 0.3).unwrap();
        assert!(ls >= 0.0);

        let lt = loss_t(&anchors, &other).unwrap();
        assert!((0.0..=2.0).contains(&lt), "L_t {lt}");

        let lc = loss_c_self_contrast(&anchors, &reps, &other, 2.0).unwrap();
        assert!((0.0..=4.0).contains(&lc), "L_c {lc}");

        let nce = loss_c_info_nce(&anchors, &reps, &other, 0.5).unwrap();
        assert!(nce >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cosine_is_symmetric_and_bounded(
        a in proptest::collection::vec(-10.0f64..10.0, 4),
        b in proptest::collection::vec(-10.0f64..10.0, 4),
    ) {
        let av = ndarray::Array1::from_vec(a);
        let bv = ndarray::Array1::from_vec(b);
        let na: f64 = av.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = bv.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(na > 1e-6 && nb > 1e-6);
        let ab = cosine_similarity(av.view(), bv.view()).unwrap();
        let ba = cosine_similarity(bv.view(), av.view()).unwrap();
        prop_assert!((-1.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn self_contrast_stays_in_gamma_band(
        seed in 0u64..500,
        gamma in 0.0f64..2.0,
        rows in 1usize..5,
    ) {
        let mut rng = seeded(seed);
        let t = random_unit_offset_matrix(&mut rng, rows, 8);
        let v = random_unit_offset_matrix(&mut rng, rows, 8);
        let n = random_unit_offset_matrix(&mut rng, rows, 8);
        let lc = loss_c_self_contrast(&t, &v, &n, gamma).unwrap();
        prop_assert!(lc >= gamma - 2.0 - 1e-12);
        prop_assert!(lc <= gamma + 2.0 + 1e-12);
    }
}

// ---------------------------------------------------------------------------
// invariances

#[test]
fn power_of_two_rescaling_is_bitwise_invariant() {
    let names = names_with_neutral(4);
    let bank = stub_bank(&names, 16, 1);
    let mut rng = seeded(5);
    let reps = random_unit_offset_matrix(&mut rng, 5, 16);
    let neutral = random_unit_offset_matrix(&mut rng, 5, 16);
    let labels = vec![0, 1, 2, 3, 4];
    let cfg = LossConfig {
        tau: 0.2,
        ..LossConfig::default()
    };
    let base_logits = similarity_logits(&bank, &reps, 0.2).unwrap();
    let base = total_loss(&bank, &reps, Some(&neutral), &labels, &cfg).unwrap();
    let base_preds = fer_core::eval::predict_reps(&bank, &reps).unwrap();
    // power-of-two factors scale every intermediate exactly, so the
    // invariance is bitwise; representations and their predicted neutrals
    // share the space and scale together
    for scale in [0.5f64, 2.0, 1024.0, 2f64.powi(-20)] {
        let scaled = reps.mapv(|x| x * scale);
        let scaled_neutral = neutral.mapv(|x| x * scale);
        let logits = similarity_logits(&bank, &scaled, 0.2).unwrap();
        assert_eq!(logits, base_logits, "scale {scale}");
        let result = total_loss(&bank, &scaled, Some(&scaled_neutral), &labels, &cfg).unwrap();
        assert_eq!(result.l_s, base.l_s, "scale {scale}");
        assert_eq!(result.l_t, base.l_t, "scale {scale}");
        assert_eq!(result.l_c, base.l_c, "scale {scale}");
        assert_eq!(result.total, base.total, "scale {scale}");
        assert_eq!(
            fer_core::eval::predict_reps(&bank, &scaled).unwrap(),
            base_preds
        );
    }
    // arbitrary positive scales agree to floating-point noise
    for scale in [10.0f64, 3.7] {
        let scaled = reps.mapv(|x| x * scale);
        let scaled_neutral = neutral.mapv(|x| x * scale);
        let result = total_loss(&bank, &scaled, Some(&scaled_neutral), &labels, &cfg).unwrap();
        assert!((result.total - base.total).abs() < 1e-12);
        assert_eq!(
            fer_core::eval::predict_reps(&bank, &scaled).unwrap(),
            base_preds
        );
    }
}

#[test]
fn argmax_is_invariant_to_temperature() {
    let names = names_with_neutral(5);
    let bank = stub_bank(&names, 32, 2);
    let mut rng = seeded(6);
    let reps = random_unit_offset_matrix(&mut rng, 10, 32);
    let argmax = |m: &Array2<f64>| -> Vec<usize> {
        m.rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for (ix, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = ix;
                    }
                }
                best
            })
            .collect()
    };
    let reference = argmax(&similarity_logits(&bank, &reps, 1.0).unwrap());
    for tau in [0.01, 0.5, 100.0] {
        let logits = similarity_logits(&bank, &reps, tau).unwrap();
        assert_eq!(argmax(&logits), reference, "tau {tau}");
    }
}

#[test]
fn loss_t_is_zero_iff_positively_collinear() {
    let mut rng = seeded(8);
    let delta_t = random_unit_offset_matrix(&mut rng, 4, 8);
    // positively collinear rows with assorted scales
    let mut delta_v = delta_t.clone();
    for (ix, mut row) in delta_v.rows_mut().into_iter().enumerate() {
        row *= 0.5 + ix as f64;
    }
    let lt = loss_t(&delta_t, &delta_v).unwrap();
    assert!(lt.abs() < 1e-12);
    // perturbing one row off the ray makes the loss strictly positive
    let mut bent = delta_v.clone();
    bent[[2, 0]] += 2.0 * (1.0 + bent[[2, 0]].abs());
    let lt_bent = loss_t(&delta_t, &bent).unwrap();
    assert!(lt_bent > 1e-6, "{lt_bent}");
    // negative collinearity is the maximum, not zero
    let lt_neg = loss_t(&delta_t, &delta_t.mapv(|x| -x)).unwrap();
    assert!((lt_neg - 2.0).abs() < 1e-12);
}

// ---------------------------------------------------------------------------
// gradient checks

const GRAD_STEP: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-3;

#[test]
fn loss_s_gradients_match_finite_differences() {
    let names = names_with_neutral(4);
    for &d_t in &[8usize, 32] {
        let bank = stub_bank(&names, d_t, 11);
        for &b in &[1usize, 5] {
            let mut rng = seeded(300 + b as u64 + d_t as u64);
            let reps = random_unit_offset_matrix(&mut rng, b, d_t);
            let labels: Vec<usize> = (0..b).map(|i| i % names.len()).collect();
            let (_, analytic) = loss_s_with_grad(&bank, &reps, &labels, 0.3).unwrap();
            let numeric = finite_difference_grad(
                &mut |m| loss_s(&bank, m, &labels, 0.3).unwrap(),
                &reps,
                GRAD_STEP,
            );
            let err = gradient_relative_error(&analytic, &numeric);
            assert!(err <= GRAD_TOL, "d_t={d_t} B={b}: {err}");
        }
    }
}

#[test]
fn loss_t_gradients_match_finite_differences() {
    for &d_t in &[8usize, 32] {
        for &b in &[1usize, 5] {
            let mut rng = seeded(400 + b as u64 + d_t as u64);
            let delta_t = random_unit_offset_matrix(&mut rng, b, d_t);
            let delta_v = random_unit_offset_matrix(&mut rng, b, d_t);
            let (_, analytic) = loss_t_with_grad(&delta_t, &delta_v).unwrap();
            let numeric = finite_difference_grad(
                &mut |m| loss_t(&delta_t, m).unwrap(),
                &delta_v,
                GRAD_STEP,
            );
            let err = gradient_relative_error(&analytic, &numeric);
            assert!(err <= GRAD_TOL, "d_t={d_t} B={b}: {err}");
        }
    }
}

#[test]
fn contrast_gradients_match_finite_differences() {
    for &d_t in &[8usize, 32] {
        for &b in &[1usize, 5] {
            let mut rng = seeded(500 + b as u64 + d_t as u64);
            let t = random_unit_offset_matrix(&mut rng, b, d_t);
            let v = random_unit_offset_matrix(&mut rng, b, d_t);
            let n = random_unit_offset_matrix(&mut rng, b, d_t);

            let (_, gv, gn) = loss_c_self_contrast_with_grad(&t, &v, &n, 2.0, false).unwrap();
            let nv = finite_difference_grad(
                &mut |m| loss_c_self_contrast(&t, m, &n, 2.0).unwrap(),
                &v,
                GRAD_STEP,
            );
            let nn = finite_difference_grad(
                &mut |m| loss_c_self_contrast(&t, &v, m, 2.0).unwrap(),
                &n,
                GRAD_STEP,
            );
            assert!(gradient_relative_error(&gv, &nv) <= GRAD_TOL);
            assert!(gradient_relative_error(&gn, &nn) <= GRAD_TOL);

            let (_, gv, gn) = loss_c_info_nce_with_grad(&t, &v, &n, 0.5).unwrap();
            let nv = finite_difference_grad(
                &mut |m| loss_c_info_nce(&t, m, &n, 0.5).unwrap(),
                &v,
                GRAD_STEP,
            );
            let nn = finite_difference_grad(
                &mut |m| loss_c_info_nce(&t, &v, m, 0.5).unwrap(),
                &n,
                GRAD_STEP,
            );
            assert!(gradient_relative_error(&gv, &nv) <= GRAD_TOL);
            assert!(gradient_relative_error(&gn, &nn) <= GRAD_TOL);
        }
    }
}

#[test]
fn total_loss_gradients_match_finite_differences() {
    let names = names_with_neutral(3);
    for &d_t in &[8usize, 32] {
        let bank = stub_bank(&names, d_t, 21);
        for &b in &[1usize, 5] {
            let mut rng = seeded(600 + b as u64 + d_t as u64);
            let reps = random_unit_offset_matrix(&mut rng, b, d_t);
            let neutral = random_unit_offset_matrix(&mut rng, b, d_t);
            let labels: Vec<usize> = (0..b).map(|i| i % names.len()).collect();
            let cfg = LossConfig {
                tau: 0.4,
                ..LossConfig::default()
            };
            let (_, grads) =
                total_loss_with_grad(&bank, &reps, Some(&neutral), &labels, &cfg).unwrap();
            let numeric_reps = finite_difference_grad(
                &mut |m| total_loss(&bank, m, Some(&neutral), &labels, &cfg).unwrap().total,
                &reps,
                GRAD_STEP,
            );
            let err = gradient_relative_error(&grads.wrt_reps, &numeric_reps);
            assert!(err <= GRAD_TOL, "reps d_t={d_t} B={b}: {err}");
            let numeric_neutral = finite_difference_grad(
                &mut |m| total_loss(&bank, &reps, Some(m), &labels, &cfg).unwrap().total,
                &neutral,
                GRAD_STEP,
            );
            let err = gradient_relative_error(&grads.wrt_neutral, &numeric_neutral);
            assert!(err <= GRAD_TOL, "neutral d_t={d_t} B={b}: {err}");
        }
    }
}

#[test]
fn hinged_self_contrast_clips_loss_and_gradient() {
    // gamma 0 with an aligned pair drives the margin negative
    let t = ndarray::array![[1.0, 0.0]];
    let v = ndarray::array![[1.0, 0.0]];
    let n = ndarray::array![[-1.0, 0.0]];
    let (unhinged, gv, _) = loss_c_self_contrast_with_grad(&t, &v, &n, 0.0, false).unwrap();
    assert!(unhinged < 0.0);
    assert!(gv.iter().any(|&g| g != 0.0) || gv.iter().all(|&g| g == 0.0));
    let (hinged, gv, gn) = loss_c_self_contrast_with_grad(&t, &v, &n, 0.0, true).unwrap();
    assert_eq!(hinged, 0.0);
    assert!(gv.iter().all(|&g| g == 0.0));
    assert!(gn.iter().all(|&g| g == 0.0));
}
