//! Throwaway calibration probe for the overfit fixture. Run explicitly:
//! cargo test --test calibrate -- --ignored --nocapture

mod common;

use common::*;
use fer_core::config::LossConfig;
use fer_core::manifest::load_dataset;
use fer_core::train::{mean_margin, model_from_checkpoint, train, ModelSpec};

#[test]
#[ignore]
fn probe_overfit_fixture() {
    let t0 = std::time::Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let names = vec![
        "surprise".to_string(),
        "fear".to_string(),
        "disgust".to_string(),
        "happiness".to_string(),
        "sadness".to_string(),
        "anger".to_string(),
        "neutral".to_string(),
    ];
    let manifest = synthetic_fixture(&dir.path().join("data"), &names, 50, 64, 7);
    println!("synth: {:?}", t0.elapsed());
    let bank = stub_bank(&names, 32, 0);

    for (encoder, lr, tau, batch) in [
        ("linear", 2e-2, 0.1, 64),
        ("tiny-cnn", 2e-3, 0.01, 64),
        ("tiny-cnn", 1e-2, 0.1, 64),
        ("tiny-cnn", 2e-2, 0.1, 32),
    ] {
        let t1 = std::time::Instant::now();
        let mut tcfg = fast_train_config(30, batch, 42);
        tcfg.learning_rate = lr;
        let lcfg = LossConfig {
            tau,
            ..LossConfig::default()
        };
        let out = dir.path().join(format!("run_{encoder}_{lr}_{tau}"));
        let spec = ModelSpec { encoder_id: encoder.to_string(), ..ModelSpec::default() };
        let run = train(&manifest, &bank, &spec, &tcfg, &lcfg, &out).unwrap();
        let last = run.history.last().unwrap();
        let (model, _) = model_from_checkpoint(&run.final_dir).unwrap();
        let report = fer_core::eval::evaluate(&model, &bank, &manifest).unwrap();
        let dataset = load_dataset(&manifest).unwrap();
        let (m1, _) = model_from_checkpoint(&out.join("epoch_1")).unwrap();
        let margin1 = mean_margin(&m1, &bank, &dataset, 64).unwrap();
        let margin_final = mean_margin(&model, &bank, &dataset, 64).unwrap();
        println!(
            "enc={encoder} lr={lr} tau={tau}: {:?} | final l_s {:.4} total {:.4} | acc {:.4} | margin {:.4} -> {:.4}",
            t1.elapsed(),
            last.losses.l_s,
            last.losses.total,
            report.overall_accuracy,
            margin1,
            margin_final,
        );
    }
}
