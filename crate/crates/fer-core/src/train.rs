//! The training loop: batch sampling, forward passes, loss computation
//! with neutral gating, parameter updates, scheduling, and checkpoints.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Array4, ArrayD};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::augment::augment_image;
use crate::bank::TextEmbeddingBank;
use crate::category::CategorySet;
use crate::checkpoint::{
    self, CheckpointError, CheckpointMeta, TrainMode, META_FILE, OPTIM_FILE, PARAMS_FILE,
};
use crate::config::{ConfigError, LossConfig, TrainConfig, UpdateMode};
use crate::derive_seed;
use crate::encoder::{
    build_encoder, ClassifierHead, EncoderError, Projection, TransformCache, TransformNetwork,
    VisualEncoder,
};
use crate::losses::{
    self, cross_entropy_with_grad, total_loss, total_loss_with_grad,
    BatchLossResult, LossError,
};
use crate::manifest::{load_dataset, DataError, DatasetManifest, LoadedDataset};
use crate::nn::{Activation, NnError, Param};
use crate::sampler::{Sampler, SamplerError};
use crate::schedule::lr_schedule;

pub const HISTORY_FILE: &str = "loss_history.csv";
pub const HISTORY_HEADER: &str = "epoch,iteration,l_s,l_t,l_c,total,lr";
pub const FINAL_DIR: &str = "final";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("category mismatch between manifest and bank: {detail}")]
    CategoryMismatch { detail: String },
    #[error("non-finite loss at epoch {epoch}, iteration {iteration}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        iteration: usize,
        detail: String,
    },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Shape(#[from] NnError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint blob has {got} tensors, model expects {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("checkpoint tensor {index} has shape {got:?}, model expects {expected:?}")]
    ParamShape {
        index: usize,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Architecture choices that are not part of the optimizer config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub encoder_id: String,
    pub fn_activation: Activation,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            encoder_id: "tiny-cnn".into(),
            fn_activation: Activation::Relu,
        }
    }
}

/// The trainable stack: encoder, projection, and either the
/// transformation network (text supervision) or a classifier head
/// (baseline arm). The frozen bank is never part of this.
pub struct Model {
    pub encoder: Box<dyn VisualEncoder>,
    pub projection: Projection,
    pub transform: Option<TransformNetwork>,
    pub head: Option<ClassifierHead>,
    d_t: usize,
}

/// Forward cache pairing [`Model::reps_train`] with [`Model::backward_reps`].
pub struct RepsCache {
    encoder: crate::encoder::EncoderCache,
    projection: Option<Array2<f64>>,
}

impl Model {
    pub fn new_text(
        spec: &ModelSpec,
        input_size: usize,
        d_t: usize,
        seed: u64,
    ) -> Result<Self, EncoderError> {
        let encoder = build_encoder(&spec.encoder_id, input_size, seed)?;
        let mut proj_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "projection-init", &[]));
        let projection = Projection::new(encoder.output_dim(), d_t, &mut proj_rng);
        let mut fn_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "transform-init", &[]));
        let transform = TransformNetwork::new(d_t, spec.fn_activation, &mut fn_rng);
        Ok(Self {
            encoder,
            projection,
            transform: Some(transform),
            head: None,
            d_t,
        })
    }

    pub fn new_baseline(
        spec: &ModelSpec,
        input_size: usize,
        n_classes: usize,
        seed: u64,
    ) -> Result<Self, EncoderError> {
        let encoder = build_encoder(&spec.encoder_id, input_size, seed)?;
        let d_t = encoder.output_dim();
        let mut head_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "head-init", &[]));
        let head = ClassifierHead::new(d_t, n_classes, &mut head_rng);
        Ok(Self {
            encoder,
            projection: Projection::Identity,
            transform: None,
            head: Some(head),
            d_t,
        })
    }

    pub fn d_t(&self) -> usize {
        self.d_t
    }

    pub fn mode(&self) -> TrainMode {
        if self.head.is_some() {
            TrainMode::Baseline
        } else {
            TrainMode::Text
        }
    }

    /// Projected representations for inference.
    pub fn reps(&self, images: &Array4<f64>) -> Result<Array2<f64>, NnError> {
        let v = self.encoder.forward(images)?;
        Ok(self.projection.forward(&v))
    }

    /// Projected representations plus the cache for the backward pass.
    pub fn reps_train(&self, images: &Array4<f64>) -> Result<(Array2<f64>, RepsCache), NnError> {
        let (v, encoder_cache) = self.encoder.forward_train(images)?;
        let (reps, projection_cache) = self.projection.forward_train(&v);
        Ok((
            reps,
            RepsCache {
                encoder: encoder_cache,
                projection: projection_cache,
            },
        ))
    }

    /// Routes a representation gradient down through projection and encoder.
    pub fn backward_reps(&mut self, cache: RepsCache, grad: &Array2<f64>) {
        let grad_v = self.projection.backward(&cache.projection, grad);
        self.encoder.backward(cache.encoder, &grad_v);
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = self.encoder.params();
        out.extend(self.projection.params());
        if let Some(t) = &self.transform {
            out.extend(t.params());
        }
        if let Some(h) = &self.head {
            out.extend(h.params());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.encoder.params_mut();
        out.extend(self.projection.params_mut());
        if let Some(t) = &mut self.transform {
            out.extend(t.params_mut());
        }
        if let Some(h) = &mut self.head {
            out.extend(h.params_mut());
        }
        out
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_values(&self) -> Vec<ArrayD<f64>> {
        self.params().iter().map(|p| p.value.clone()).collect()
    }

    pub fn load_param_values(&mut self, values: &[ArrayD<f64>]) -> Result<(), TrainError> {
        let mut params = self.params_mut();
        if params.len() != values.len() {
            return Err(TrainError::ParamCount {
                expected: params.len(),
                got: values.len(),
            });
        }
        for (index, (param, value)) in params.iter_mut().zip(values).enumerate() {
            if param.value.shape() != value.shape() {
                return Err(TrainError::ParamShape {
                    index,
                    expected: param.value.shape().to_vec(),
                    got: value.shape().to_vec(),
                });
            }
            param.value.assign(value);
        }
        Ok(())
    }
}

/// SGD with momentum and decoupled-from-nothing classic weight decay:
/// `buf = mu * buf + grad + wd * w; w -= lr * buf`. Decay skips biases.
pub struct SgdMomentum {
    momentum: f64,
    weight_decay: f64,
    buffers: Vec<ArrayD<f64>>,
}

impl SgdMomentum {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            buffers: Vec::new(),
        }
    }

    pub fn buffers(&self) -> &[ArrayD<f64>] {
        &self.buffers
    }

    pub fn load_buffers(&mut self, buffers: Vec<ArrayD<f64>>) {
        self.buffers = buffers;
    }

    pub fn step(&mut self, mut params: Vec<&mut Param>, lr: f64) {
        if self.buffers.is_empty() {
            self.buffers = params
                .iter()
                .map(|p| ArrayD::zeros(p.value.raw_dim()))
                .collect();
        }
        assert_eq!(self.buffers.len(), params.len(), "optimizer/model mismatch");
        for (param, buf) in params.iter_mut().zip(&mut self.buffers) {
            let wd = if param.decay { self.weight_decay } else { 0.0 };
            ndarray::Zip::from(buf.view_mut())
                .and(&param.grad)
                .and(&param.value)
                .for_each(|b, &g, &w| {
                    *b = self.momentum * *b + g + wd * w;
                });
            ndarray::Zip::from(&mut param.value)
                .and(buf.view())
                .for_each(|w, &b| {
                    *w -= lr * b;
                });
        }
    }
}

/// Mutable training state: model, optimizer slots, and loop counters.
pub struct TrainState {
    pub epoch: usize,
    pub iteration: usize,
    pub model: Model,
    pub optim: SgdMomentum,
    pub seed: u64,
}

/// One assembled mini-batch.
pub struct Batch {
    pub images: Array4<f64>,
    pub labels: Vec<usize>,
    pub ids: Vec<String>,
}

/// What a single step did.
#[derive(Debug)]
pub struct StepOutcome {
    pub losses: BatchLossResult,
    /// Number of parameter updates applied (1 in combined mode; 1 or 3 in
    /// sequential mode depending on the neutral gate).
    pub updates_applied: usize,
}

pub fn assemble_batch(
    dataset: &LoadedDataset,
    indices: &[usize],
    mut augment_rng: Option<&mut ChaCha8Rng>,
) -> Batch {
    let first = &dataset.samples[indices[0]].image;
    let (c, h, w) = first.dim();
    let mut images = Array4::<f64>::zeros((indices.len(), c, h, w));
    let mut labels = Vec::with_capacity(indices.len());
    let mut ids = Vec::with_capacity(indices.len());
    for (row, &ix) in indices.iter().enumerate() {
        let sample = &dataset.samples[ix];
        match augment_rng.as_deref_mut() {
            Some(rng) => {
                let img = augment_image(&sample.image.view(), rng);
                images.index_axis_mut(ndarray::Axis(0), row).assign(&img);
            }
            None => {
                images
                    .index_axis_mut(ndarray::Axis(0), row)
                    .assign(&sample.image);
            }
        }
        labels.push(sample.label);
        ids.push(sample.source_id.clone());
    }
    Batch {
        images,
        labels,
        ids,
    }
}

/// Runs the transformation network over a full batch of representations;
/// the loss only reads rows of non-neutral samples.
fn transform_forward(
    model: &Model,
    reps: &Array2<f64>,
) -> (Array2<f64>, TransformCache) {
    model
        .transform
        .as_ref()
        .expect("text-mode model has a transformation network")
        .forward_train(reps)
}

fn check_finite(
    losses: &BatchLossResult,
    epoch: usize,
    iteration: usize,
    ids: &[String],
) -> Result<(), TrainError> {
    let finite = losses.total.is_finite()
        && losses.l_s.is_finite()
        && losses.l_t.is_none_or(f64::is_finite)
        && losses.l_c.is_none_or(f64::is_finite);
    if finite {
        return Ok(());
    }
    Err(TrainError::NonFiniteLoss {
        epoch,
        iteration,
        detail: format!(
            "l_s={:?} l_t={:?} l_c={:?} total={:?}; batch ids: {}",
            losses.l_s,
            losses.l_t,
            losses.l_c,
            losses.total,
            ids.join(" ")
        ),
    })
}

/// Weighted backward pass and one optimizer update. The weights select
/// which terms contribute gradient; loss values are reported for every
/// active term regardless.
fn update_text(
    state: &mut TrainState,
    batch: &Batch,
    bank: &TextEmbeddingBank,
    lcfg: &LossConfig,
    weights: (f64, f64, f64),
    lr: f64,
) -> Result<BatchLossResult, TrainError> {
    let cfg = LossConfig {
        lambda_s: weights.0,
        lambda_t: weights.1,
        lambda_c: weights.2,
        ..*lcfg
    };
    let (reps, cache) = state.model.reps_train(&batch.images)?;
    let has_gated_samples = !losses::non_neutral_indices(
        &batch.labels,
        bank.categories().neutral_index(),
    )
    .is_empty();
    let fn_pass = has_gated_samples.then(|| transform_forward(&state.model, &reps));
    let neutral = fn_pass.as_ref().map(|(n, _)| n);
    let (result, grads) = total_loss_with_grad(bank, &reps, neutral, &batch.labels, &cfg)?;

    state.model.zero_grads();
    let mut grad_reps = grads.wrt_reps;
    if let Some((_, fn_cache)) = fn_pass {
        let transform = state
            .model
            .transform
            .as_mut()
            .expect("text-mode model has a transformation network");
        grad_reps += &transform.backward(&fn_cache, &grads.wrt_neutral);
    }
    state.model.backward_reps(cache, &grad_reps);
    state.optim.step(state.model.params_mut(), lr);
    Ok(result)
}

/// One training step on a text-supervised model.
///
/// Combined mode applies one update on the weighted total. Sequential mode
/// applies up to three updates in order (transformation, contrast,
/// similarity), recomputing gradients at the current parameters each time;
/// the gated updates are skipped entirely on an all-neutral batch. Reported
/// losses are always measured before any update.
pub fn train_step(
    state: &mut TrainState,
    batch: &Batch,
    bank: &TextEmbeddingBank,
    tcfg: &TrainConfig,
    lcfg: &LossConfig,
    lr: f64,
) -> Result<StepOutcome, TrainError> {
    assert!(!batch.labels.is_empty(), "batch must be non-empty");
    match tcfg.update_mode {
        UpdateMode::Combined => {
            let losses = update_text(
                state,
                batch,
                bank,
                lcfg,
                (lcfg.lambda_s, lcfg.lambda_t, lcfg.lambda_c),
                lr,
            )?;
            check_finite(&losses, state.epoch, state.iteration, &batch.ids)?;
            Ok(StepOutcome {
                losses,
                updates_applied: 1,
            })
        }
        UpdateMode::Sequential => {
            // measure before any update
            let (reps, _) = state.model.reps_train(&batch.images)?;
            let gated = !losses::non_neutral_indices(
                &batch.labels,
                bank.categories().neutral_index(),
            )
            .is_empty();
            let measured = if gated {
                let neutral = state
                    .model
                    .transform
                    .as_ref()
                    .expect("text-mode model has a transformation network")
                    .forward(&reps);
                total_loss(bank, &reps, Some(&neutral), &batch.labels, lcfg)?
            } else {
                total_loss(bank, &reps, None, &batch.labels, lcfg)?
            };
            check_finite(&measured, state.epoch, state.iteration, &batch.ids)?;
            let mut updates = 0;
            if measured.n_e > 0 {
                update_text(state, batch, bank, lcfg, (0.0, 1.0, 0.0), lr)?;
                updates += 1;
                update_text(state, batch, bank, lcfg, (0.0, 0.0, 1.0), lr)?;
                updates += 1;
            }
            update_text(state, batch, bank, lcfg, (1.0, 0.0, 0.0), lr)?;
            updates += 1;
            Ok(StepOutcome {
                losses: measured,
                updates_applied: updates,
            })
        }
    }
}

/// One training step on the baseline classifier arm.
pub fn train_step_baseline(
    state: &mut TrainState,
    batch: &Batch,
    lr: f64,
) -> Result<StepOutcome, TrainError> {
    assert!(!batch.labels.is_empty(), "batch must be non-empty");
    let (reps, cache) = state.model.reps_train(&batch.images)?;
    let head = state.model.head.as_mut().expect("baseline model has a head");
    let logits = head.affine.forward(&reps);
    let (loss, grad_logits) = cross_entropy_with_grad(&logits, &batch.labels)?;
    state.model.zero_grads();
    let head = state.model.head.as_mut().expect("baseline model has a head");
    let grad_reps = head.affine.backward(&reps, &grad_logits);
    state.model.backward_reps(cache, &grad_reps);
    state.optim.step(state.model.params_mut(), lr);
    let losses = BatchLossResult {
        l_s: loss,
        l_t: None,
        l_c: None,
        total: loss,
        n_e: 0,
    };
    check_finite(&losses, state.epoch, state.iteration, &batch.ids)?;
    Ok(StepOutcome {
        losses,
        updates_applied: 1,
    })
}

/// One row of the loss-history CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub epoch: usize,
    pub iteration: usize,
    pub losses: BatchLossResult,
    pub lr: f64,
}

pub fn format_history(records: &[IterRecord]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in records {
        let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{:.12e},{},{},{:.12e},{:.12e}\n",
            r.epoch,
            r.iteration,
            r.losses.l_s,
            fmt_opt(r.losses.l_t),
            fmt_opt(r.losses.l_c),
            r.losses.total,
            r.lr
        ));
    }
    out
}

/// Short digest of the full run configuration, recorded in checkpoints.
pub fn config_hash(spec: &ModelSpec, tcfg: &TrainConfig, lcfg: &LossConfig) -> String {
    let canonical = format!("{spec:?}|{tcfg:?}|{lcfg:?}");
    let digest = Sha256::digest(canonical.as_bytes());
    crate::to_hex(&digest)[..16].to_string()
}

/// A finished (or checkpoint-resumed) training run.
pub struct TrainRun {
    pub state: TrainState,
    pub history: Vec<IterRecord>,
    pub final_dir: PathBuf,
}

fn check_categories_match(
    manifest_categories: &CategorySet,
    bank_categories: &CategorySet,
) -> Result<(), TrainError> {
    if manifest_categories != bank_categories {
        return Err(TrainError::CategoryMismatch {
            detail: format!(
                "manifest has [{}], bank has [{}]",
                manifest_categories, bank_categories
            ),
        });
    }
    Ok(())
}

fn dataset_image_size(dataset: &LoadedDataset) -> Result<usize, TrainError> {
    let first = dataset
        .samples
        .first()
        .ok_or(TrainError::Data(DataError::EmptyDataset))?;
    let (c, h, w) = first.image.dim();
    if c != 3 || h != w {
        return Err(TrainError::Shape(crate::nn::shape_error(
            "square RGB images",
            format!("({c}, {h}, {w})"),
        )));
    }
    for s in &dataset.samples {
        if s.image.dim() != first.image.dim() {
            return Err(TrainError::Shape(crate::nn::shape_error(
                format!("{:?} for every image", first.image.dim()),
                format!("{:?} ({})", s.image.dim(), s.source_id),
            )));
        }
    }
    Ok(h)
}

struct LoopOutput {
    state: TrainState,
    history: Vec<IterRecord>,
    final_dir: PathBuf,
}

/// Shared epoch/iteration loop for both supervision modes.
#[allow(clippy::too_many_arguments)]
fn run_loop(
    mut state: TrainState,
    dataset: &LoadedDataset,
    bank: Option<&TextEmbeddingBank>,
    tcfg: &TrainConfig,
    lcfg: &LossConfig,
    meta_template: CheckpointMeta,
    out_dir: &Path,
    mut history: Vec<IterRecord>,
) -> Result<LoopOutput, TrainError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let sampler = Sampler::new(&dataset.labels(), dataset.categories.len(), tcfg.oversample, tcfg.seed)?;
    let iters_per_epoch = sampler.batches_per_epoch(tcfg.batch_size);
    let total_steps = tcfg.epochs * iters_per_epoch;

    let write_ckpt = |state: &TrainState, dir: &Path, epoch: usize| -> Result<(), TrainError> {
        let meta = CheckpointMeta {
            epoch,
            ..meta_template.clone()
        };
        checkpoint::write_checkpoint(
            dir,
            &state.model.param_values(),
            state.optim.buffers(),
            &meta,
        )?;
        Ok(())
    };

    if state.epoch == 0 {
        write_ckpt(&state, &out_dir.join("epoch_0"), 0)?;
    }

    let start_epoch = state.epoch + 1;
    for epoch in start_epoch..=tcfg.epochs {
        state.epoch = epoch;
        let batches = sampler.epoch_batches(epoch, tcfg.batch_size);
        for (batch_ix, indices) in batches.iter().enumerate() {
            let mut augment_rng = tcfg.augment.then(|| {
                ChaCha8Rng::seed_from_u64(derive_seed(
                    tcfg.seed,
                    "augment",
                    &[epoch as u64, batch_ix as u64],
                ))
            });
            let batch = assemble_batch(dataset, indices, augment_rng.as_mut());
            let lr = lr_schedule(state.iteration, total_steps, tcfg.learning_rate, tcfg.warmup_fraction);
            let outcome = match bank {
                Some(bank) => train_step(&mut state, &batch, bank, tcfg, lcfg, lr)?,
                None => train_step_baseline(&mut state, &batch, lr)?,
            };
            history.push(IterRecord {
                epoch,
                iteration: state.iteration,
                losses: outcome.losses,
                lr,
            });
            state.iteration += 1;
        }
        write_ckpt(&state, &out_dir.join(format!("epoch_{epoch}")), epoch)?;
        if let Some(last) = history.last() {
            log::info!(
                "epoch {epoch}/{}: total {:.6}, l_s {:.6}",
                tcfg.epochs,
                last.losses.total,
                last.losses.l_s
            );
        }
    }

    let final_dir = out_dir.join(FINAL_DIR);
    write_ckpt(&state, &final_dir, state.epoch)?;
    let history_path = out_dir.join(HISTORY_FILE);
    std::fs::write(&history_path, format_history(&history)).map_err(io_err(&history_path))?;
    Ok(LoopOutput {
        state,
        history,
        final_dir,
    })
}

/// Trains a text-supervised model against a frozen bank.
pub fn train(
    manifest: &DatasetManifest,
    bank: &TextEmbeddingBank,
    spec: &ModelSpec,
    tcfg: &TrainConfig,
    lcfg: &LossConfig,
    out_dir: &Path,
) -> Result<TrainRun, TrainError> {
    tcfg.validate()?;
    lcfg.validate()?;
    check_categories_match(&manifest.categories, bank.categories())?;
    if manifest.categories.neutral_index().is_none() {
        log::warn!(
            "category set has no \"neutral\" class; transformation and contrast terms are disabled"
        );
    }
    let dataset = load_dataset(manifest)?;
    let input_size = dataset_image_size(&dataset)?;
    let model = Model::new_text(spec, input_size, bank.dim(), tcfg.seed)?;
    let meta = CheckpointMeta {
        encoder: spec.encoder_id.clone(),
        input_size,
        d_v: model.encoder.output_dim(),
        d_t: bank.dim(),
        mode: TrainMode::Text,
        categories: manifest.categories.names().to_vec(),
        seed: tcfg.seed,
        config_hash: config_hash(spec, tcfg, lcfg),
        epoch: 0,
        fn_activation: spec.fn_activation.name().to_string(),
    };
    let state = TrainState {
        epoch: 0,
        iteration: 0,
        model,
        optim: SgdMomentum::new(tcfg.momentum, tcfg.weight_decay),
        seed: tcfg.seed,
    };
    let out = run_loop(state, &dataset, Some(bank), tcfg, lcfg, meta, out_dir, Vec::new())?;
    Ok(TrainRun {
        state: out.state,
        history: out.history,
        final_dir: out.final_dir,
    })
}

/// Trains the baseline arm: encoder plus classifier head under softmax
/// cross-entropy on discrete labels.
pub fn train_baseline(
    manifest: &DatasetManifest,
    spec: &ModelSpec,
    tcfg: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainRun, TrainError> {
    tcfg.validate()?;
    let dataset = load_dataset(manifest)?;
    let input_size = dataset_image_size(&dataset)?;
    let model = Model::new_baseline(spec, input_size, manifest.categories.len(), tcfg.seed)?;
    let meta = CheckpointMeta {
        encoder: spec.encoder_id.clone(),
        input_size,
        d_v: model.encoder.output_dim(),
        d_t: model.d_t(),
        mode: TrainMode::Baseline,
        categories: manifest.categories.names().to_vec(),
        seed: tcfg.seed,
        config_hash: config_hash(spec, tcfg, &LossConfig::default()),
        epoch: 0,
        fn_activation: spec.fn_activation.name().to_string(),
    };
    let state = TrainState {
        epoch: 0,
        iteration: 0,
        model,
        optim: SgdMomentum::new(tcfg.momentum, tcfg.weight_decay),
        seed: tcfg.seed,
    };
    let out = run_loop(state, &dataset, None, tcfg, &LossConfig::default(), meta, out_dir, Vec::new())?;
    Ok(TrainRun {
        state: out.state,
        history: out.history,
        final_dir: out.final_dir,
    })
}

/// Rebuilds a model from a checkpoint directory.
pub fn model_from_checkpoint(dir: &Path) -> Result<(Model, CheckpointMeta), TrainError> {
    let (params, _, meta) = checkpoint::read_checkpoint(dir)?;
    let mut model = build_model_from_meta(&meta)?;
    model.load_param_values(&params)?;
    Ok((model, meta))
}

fn build_model_from_meta(meta: &CheckpointMeta) -> Result<Model, TrainError> {
    let spec = ModelSpec {
        encoder_id: meta.encoder.clone(),
        fn_activation: Activation::parse(&meta.fn_activation).unwrap_or(Activation::Relu),
    };
    let model = match meta.mode {
        TrainMode::Text => Model::new_text(&spec, meta.input_size, meta.d_t, meta.seed)?,
        TrainMode::Baseline => {
            Model::new_baseline(&spec, meta.input_size, meta.categories.len(), meta.seed)?
        }
    };
    Ok(model)
}

/// Resumes text-supervised training from a checkpoint directory, replaying
/// the same per-epoch sample streams an uninterrupted run would have seen.
/// The architecture is rebuilt from the checkpoint's own metadata.
pub fn resume_train(
    ckpt_dir: &Path,
    manifest: &DatasetManifest,
    bank: &TextEmbeddingBank,
    tcfg: &TrainConfig,
    lcfg: &LossConfig,
    out_dir: &Path,
) -> Result<TrainRun, TrainError> {
    tcfg.validate()?;
    lcfg.validate()?;
    check_categories_match(&manifest.categories, bank.categories())?;
    let (params, optim_buffers, meta) = checkpoint::read_checkpoint(ckpt_dir)?;
    let mut model = build_model_from_meta(&meta)?;
    model.load_param_values(&params)?;
    let dataset = load_dataset(manifest)?;
    let input_size = dataset_image_size(&dataset)?;
    if input_size != meta.input_size {
        return Err(TrainError::Shape(crate::nn::shape_error(
            format!("{0}x{0} images from the checkpoint", meta.input_size),
            format!("{0}x{0}", input_size),
        )));
    }
    let mut optim = SgdMomentum::new(tcfg.momentum, tcfg.weight_decay);
    if !optim_buffers.is_empty() {
        optim.load_buffers(optim_buffers);
    }
    let sampler_probe = Sampler::new(&dataset.labels(), dataset.categories.len(), tcfg.oversample, tcfg.seed)?;
    let iters_per_epoch = sampler_probe.batches_per_epoch(tcfg.batch_size);
    let state = TrainState {
        epoch: meta.epoch,
        iteration: meta.epoch * iters_per_epoch,
        model,
        optim,
        seed: tcfg.seed,
    };
    let out = run_loop(state, &dataset, Some(bank), tcfg, lcfg, meta, out_dir, Vec::new())?;
    Ok(TrainRun {
        state: out.state,
        history: out.history,
        final_dir: out.final_dir,
    })
}

/// Mean self-contrast margin `sim(t_i, v_i) - sim(t_i, n_i)` over all
/// non-neutral samples of a dataset; the quantity the contrast objective
/// is meant to drive up over training.
pub fn mean_margin(
    model: &Model,
    bank: &TextEmbeddingBank,
    dataset: &LoadedDataset,
    batch_size: usize,
) -> Result<f64, TrainError> {
    let transform = model
        .transform
        .as_ref()
        .expect("margin is defined for text-mode models");
    let neutral_ix = dataset.categories.neutral_index();
    let mut weighted = 0.0;
    let mut count = 0usize;
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = assemble_batch(dataset, chunk, None);
        let selected = losses::non_neutral_indices(&batch.labels, neutral_ix);
        if selected.is_empty() {
            continue;
        }
        let reps = model.reps(&batch.images)?;
        let neutral = transform.forward(&reps);
        let v_sel = select_rows(&reps, &selected);
        let n_sel = select_rows(&neutral, &selected);
        let t_sel = losses::gather_bank_columns(bank, &batch.labels, &selected);
        let margin = losses::mean_contrast_margin(&t_sel, &v_sel, &n_sel)?;
        weighted += margin * selected.len() as f64;
        count += selected.len();
    }
    if count == 0 {
        return Err(TrainError::Loss(LossError::EmptyBatch));
    }
    Ok(weighted / count as f64)
}

fn select_rows(m: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((rows.len(), m.ncols()));
    for (dst, &src) in rows.iter().enumerate() {
        out.row_mut(dst).assign(&m.row(src));
    }
    out
}

/// Paths of the artifacts a run writes under its output directory.
pub fn checkpoint_paths(out_dir: &Path, epoch: usize) -> (PathBuf, PathBuf, PathBuf) {
    let dir = out_dir.join(format!("epoch_{epoch}"));
    (dir.join(PARAMS_FILE), dir.join(OPTIM_FILE), dir.join(META_FILE))
}
