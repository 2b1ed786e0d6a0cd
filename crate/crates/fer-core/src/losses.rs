//! Objective terms and their analytic gradients.
//!
//! All losses are plain functions of their inputs: similarity
//! cross-entropy over the bank, the transformation loss on representation
//! and text-embedding differences, the self-contrast margin (plus its
//! contrastive-learning alternative), and the weighted total with neutral
//! gating. Reductions are arithmetic means over the relevant sample count:
//! the whole batch for the similarity loss, the non-neutral count for the
//! transformation and contrast terms.

use ndarray::{Array1, Array2, ArrayView1};
use thiserror::Error;

use crate::bank::TextEmbeddingBank;
use crate::config::{ContrastVariant, LossConfig};

/// Norm floor below which a vector counts as degenerate. Degenerate
/// differences raise instead of clamping: a zero expression-to-neutral
/// difference means the transformation collapsed onto its input, which is
/// worth surfacing.
pub const NORM_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("representation row {index} has near-zero norm")]
    DegenerateVector { index: usize },
    #[error("bank column {index} has near-zero norm")]
    DegenerateBankColumn { index: usize },
    #[error("difference vector in row {index} has near-zero norm ({side})")]
    DegenerateDifference { index: usize, side: &'static str },
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("label {label} at row {index} outside {n_classes} classes")]
    InvalidLabel {
        index: usize,
        label: usize,
        n_classes: usize,
    },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("batch has non-neutral samples but no neutral representations were supplied")]
    MissingNeutralReps,
}

fn shape_err(expected: impl Into<String>, got: impl Into<String>) -> LossError {
    LossError::Shape {
        expected: expected.into(),
        got: got.into(),
    }
}

/// Per-batch loss values. The transformation and contrast terms are absent
/// exactly when the batch contains no non-neutral samples (or no neutral
/// category exists to gate against).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLossResult {
    pub l_s: f64,
    pub l_t: Option<f64>,
    pub l_c: Option<f64>,
    /// `lambda_s * l_s + lambda_t * l_t + lambda_c * l_c`, absent terms zero.
    pub total: f64,
    /// Count of non-neutral samples in the batch.
    pub n_e: usize,
}

/// Gradients of the total loss with respect to its two representation
/// inputs. Rows of `wrt_neutral` at neutral-labeled samples are zero.
#[derive(Debug, Clone)]
pub struct TotalLossGrads {
    pub wrt_reps: Array2<f64>,
    pub wrt_neutral: Array2<f64>,
}

fn row_norm(row: ArrayView1<f64>) -> f64 {
    row.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Unit-normalizes matrix rows; errors with the offending row index.
fn normalize_rows(
    m: &Array2<f64>,
    on_degenerate: impl Fn(usize) -> LossError,
) -> Result<(Array2<f64>, Array1<f64>), LossError> {
    let mut unit = m.clone();
    let mut norms = Array1::<f64>::zeros(m.nrows());
    for (ix, mut row) in unit.rows_mut().into_iter().enumerate() {
        let n = row_norm(row.view());
        if n <= NORM_EPSILON {
            return Err(on_degenerate(ix));
        }
        row.mapv_inplace(|x| x / n);
        norms[ix] = n;
    }
    Ok((unit, norms))
}

/// Bank columns as unit rows: `C x d_t`.
fn bank_unit_rows(bank: &TextEmbeddingBank) -> Result<Array2<f64>, LossError> {
    let t = bank.matrix().t().to_owned(); // C x d_t
    let (unit, _) = normalize_rows(&t, |index| LossError::DegenerateBankColumn { index })?;
    Ok(unit)
}

/// Cosine similarity of two vectors, clamped into `[-1, 1]`.
pub fn cosine_similarity(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64, LossError> {
    if a.len() != b.len() {
        return Err(shape_err(
            format!("vectors of equal length {}", a.len()),
            format!("{}", b.len()),
        ));
    }
    let na = row_norm(a);
    if na <= NORM_EPSILON {
        return Err(LossError::DegenerateVector { index: 0 });
    }
    let nb = row_norm(b);
    if nb <= NORM_EPSILON {
        return Err(LossError::DegenerateVector { index: 1 });
    }
    Ok((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine similarities of every representation against every bank column:
/// entry `(i, c)` is `cos(t_c, v_i)`.
pub fn similarity_matrix(
    bank: &TextEmbeddingBank,
    reps: &Array2<f64>,
) -> Result<Array2<f64>, LossError> {
    if reps.ncols() != bank.dim() {
        return Err(shape_err(
            format!("(B, {}) representations", bank.dim()),
            format!("{:?}", reps.dim()),
        ));
    }
    let bank_unit = bank_unit_rows(bank)?;
    let (reps_unit, _) = normalize_rows(reps, |index| LossError::DegenerateVector { index })?;
    let mut cos = reps_unit.dot(&bank_unit.t()); // B x C
    cos.mapv_inplace(|x| x.clamp(-1.0, 1.0));
    Ok(cos)
}

/// Temperature-scaled similarity logits: entry `(i, c)` is
/// `cos(t_c, v_i) / tau`.
pub fn similarity_logits(
    bank: &TextEmbeddingBank,
    reps: &Array2<f64>,
    tau: f64,
) -> Result<Array2<f64>, LossError> {
    assert!(tau > 0.0, "temperature must be positive");
    Ok(similarity_matrix(bank, reps)? / tau)
}

fn check_labels(labels: &[usize], batch: usize, n_classes: usize) -> Result<(), LossError> {
    if labels.len() != batch {
        return Err(shape_err(
            format!("{batch} labels"),
            format!("{}", labels.len()),
        ));
    }
    for (index, &label) in labels.iter().enumerate() {
        if label >= n_classes {
            return Err(LossError::InvalidLabel {
                index,
                label,
                n_classes,
            });
        }
    }
    Ok(())
}

/// Row-wise `logsumexp` plus softmax probabilities of a logit matrix.
fn softmax_stats(logits: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let b = logits.nrows();
    let mut lse = Array1::<f64>::zeros(b);
    let mut probs = logits.clone();
    for (ix, mut row) in probs.rows_mut().into_iter().enumerate() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&x| (x - m).exp()).sum();
        let l = m + sum.ln();
        lse[ix] = l;
        row.mapv_inplace(|x| (x - l).exp());
    }
    (lse, probs)
}

fn loss_s_impl(
    bank: &TextEmbeddingBank,
    reps: &Array2<f64>,
    labels: &[usize],
    tau: f64,
    want_grad: bool,
) -> Result<(f64, Option<Array2<f64>>), LossError> {
    let b = reps.nrows();
    if b == 0 {
        return Err(LossError::EmptyBatch);
    }
    check_labels(labels, b, bank.n_categories())?;
    assert!(tau > 0.0, "temperature must be positive");
    let bank_unit = bank_unit_rows(bank)?;
    let (reps_unit, norms) = normalize_rows(reps, |index| LossError::DegenerateVector { index })?;
    let mut logits = reps_unit.dot(&bank_unit.t());
    logits.mapv_inplace(|x| x.clamp(-1.0, 1.0) / tau);
    let (lse, probs) = softmax_stats(&logits);
    let mut loss = 0.0;
    for (ix, &label) in labels.iter().enumerate() {
        loss += lse[ix] - logits[[ix, label]];
    }
    loss /= b as f64;
    if !want_grad {
        return Ok((loss, None));
    }
    // dL/ds = (softmax - onehot) / B; chain through the temperature, the
    // unit bank rows, and the representation normalization.
    let mut q = probs;
    for (ix, &label) in labels.iter().enumerate() {
        q[[ix, label]] -= 1.0;
    }
    q /= b as f64 * tau;
    let g_unit = q.dot(&bank_unit); // B x d, gradient wrt unit reps
    let mut grad = Array2::<f64>::zeros(reps.raw_dim());
    for ix in 0..b {
        let u = reps_unit.row(ix);
        let g = g_unit.row(ix);
        let proj = g.dot(&u);
        let inv = 1.0 / norms[ix];
        for (dst, (&gv, &uv)) in grad.row_mut(ix).iter_mut().zip(g.iter().zip(u.iter())) {
            *dst = (gv - proj * uv) * inv;
        }
    }
    Ok((loss, Some(grad)))
}

/// Similarity cross-entropy over the whole batch: mean of
/// `-log softmax(cos(t_., v_i)/tau)[label_i]`. Non-negative.
pub fn loss_s(
    bank: &TextEmbeddingBank,
    reps: &Array2<f64>,
    labels: &[usize],
    tau: f64,
) -> Result<f64, LossError> {
    loss_s_impl(bank, reps, labels, tau, false).map(|(l, _)| l)
}

/// [`loss_s`] plus its gradient with respect to the representations.
pub fn loss_s_with_grad(
    bank: &TextEmbeddingBank,
    reps: &Array2<f64>,
    labels: &[usize],
    tau: f64,
) -> Result<(f64, Array2<f64>), LossError> {
    loss_s_impl(bank, reps, labels, tau, true).map(|(l, g)| (l, g.expect("grad requested")))
}

fn check_same_shape(a: &Array2<f64>, b: &Array2<f64>) -> Result<(), LossError> {
    if a.dim() != b.dim() {
        return Err(shape_err(format!("{:?}", a.dim()), format!("{:?}", b.dim())));
    }
    Ok(())
}

fn loss_t_impl(
    delta_t: &Array2<f64>,
    delta_v: &Array2<f64>,
    want_grad: bool,
) -> Result<(f64, Option<Array2<f64>>), LossError> {
    check_same_shape(delta_t, delta_v)?;
    let n = delta_t.nrows();
    if n == 0 {
        return Err(LossError::EmptyBatch);
    }
    let (t_unit, _) = normalize_rows(delta_t, |index| LossError::DegenerateDifference {
        index,
        side: "text difference",
    })?;
    let (v_unit, v_norms) = normalize_rows(delta_v, |index| LossError::DegenerateDifference {
        index,
        side: "representation difference",
    })?;
    let mut loss = 0.0;
    let mut grad = want_grad.then(|| Array2::<f64>::zeros(delta_v.raw_dim()));
    let scale = 1.0 / n as f64;
    for ix in 0..n {
        let a = t_unit.row(ix);
        let b = v_unit.row(ix);
        let cos = a.dot(&b).clamp(-1.0, 1.0);
        loss += 1.0 - cos;
        if let Some(g) = grad.as_mut() {
            // d(1 - cos(a, b))/db for unit a, through b's normalization
            let inv = 1.0 / v_norms[ix];
            for (dst, (&av, &bv)) in g.row_mut(ix).iter_mut().zip(a.iter().zip(b.iter())) {
                *dst = -(av - cos * bv) * inv * scale;
            }
        }
    }
    Ok((loss * scale, grad))
}

/// Transformation loss: mean over rows of
/// `1 - cos(delta_t, delta_v)`, so the value lies in `[0, 2]`.
pub fn loss_t(delta_t: &Array2<f64>, delta_v: &Array2<f64>) -> Result<f64, LossError> {
    loss_t_impl(delta_t, delta_v, false).map(|(l, _)| l)
}

/// [`loss_t`] plus its gradient with respect to `delta_v`.
pub fn loss_t_with_grad(
    delta_t: &Array2<f64>,
    delta_v: &Array2<f64>,
) -> Result<(f64, Array2<f64>), LossError> {
    loss_t_impl(delta_t, delta_v, true).map(|(l, g)| (l, g.expect("grad requested")))
}

/// Per-row cosine between matched rows of two matrices, plus the pieces
/// needed for its gradient.
struct RowCosines {
    cos: Array1<f64>,
    a_unit: Array2<f64>,
    b_unit: Array2<f64>,
    b_norms: Array1<f64>,
}

fn row_cosines(a: &Array2<f64>, b: &Array2<f64>) -> Result<RowCosines, LossError> {
    check_same_shape(a, b)?;
    let (a_unit, _) = normalize_rows(a, |index| LossError::DegenerateVector { index })?;
    let (b_unit, b_norms) = normalize_rows(b, |index| LossError::DegenerateVector { index })?;
    let mut cos = Array1::<f64>::zeros(a.nrows());
    for ix in 0..a.nrows() {
        cos[ix] = a_unit.row(ix).dot(&b_unit.row(ix)).clamp(-1.0, 1.0);
    }
    Ok(RowCosines {
        cos,
        a_unit,
        b_unit,
        b_norms,
    })
}

/// Gradient of `cos(a_i, b_i)` with respect to `b_i`, scaled by `coeff[i]`.
fn accumulate_cosine_grad(pairs: &RowCosines, coeff: &Array1<f64>, out: &mut Array2<f64>) {
    for ix in 0..out.nrows() {
        let a = pairs.a_unit.row(ix);
        let b = pairs.b_unit.row(ix);
        let cos = pairs.cos[ix];
        let scale = coeff[ix] / pairs.b_norms[ix];
        for (dst, (&av, &bv)) in out.row_mut(ix).iter_mut().zip(a.iter().zip(b.iter())) {
            *dst += (av - cos * bv) * scale;
        }
    }
}

fn self_contrast_impl(
    t_anchor: &Array2<f64>,
    v_pos: &Array2<f64>,
    n_neg: &Array2<f64>,
    gamma: f64,
    hinge: bool,
    want_grad: bool,
) -> Result<(f64, Option<(Array2<f64>, Array2<f64>)>), LossError> {
    let n = t_anchor.nrows();
    if n == 0 {
        return Err(LossError::EmptyBatch);
    }
    let tv = row_cosines(t_anchor, v_pos)?;
    let tn = row_cosines(t_anchor, n_neg)?;
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    // per-sample weight is zero where the hinge clips
    let mut active = Array1::<f64>::zeros(n);
    for ix in 0..n {
        let per_sample = tn.cos[ix] - tv.cos[ix] + gamma;
        if hinge && per_sample <= 0.0 {
            continue;
        }
        loss += per_sample;
        active[ix] = scale;
    }
    loss *= scale;
    if !want_grad {
        return Ok((loss, None));
    }
    let mut grad_v = Array2::<f64>::zeros(v_pos.raw_dim());
    let mut grad_n = Array2::<f64>::zeros(n_neg.raw_dim());
    let neg_active = active.mapv(|x| -x);
    accumulate_cosine_grad(&tv, &neg_active, &mut grad_v);
    accumulate_cosine_grad(&tn, &active, &mut grad_n);
    Ok((loss, Some((grad_v, grad_n))))
}

/// Self-contrast objective: mean over rows of
/// `sim(t, n) - sim(t, v) + gamma`, exactly as written, with no hinge.
/// With `gamma = 2` each per-sample value lies in `[0, 4]`.
pub fn loss_c_self_contrast(
    t_anchor: &Array2<f64>,
    v_pos: &Array2<f64>,
    n_neg: &Array2<f64>,
    gamma: f64,
) -> Result<f64, LossError> {
    self_contrast_impl(t_anchor, v_pos, n_neg, gamma, false, false).map(|(l, _)| l)
}

/// [`loss_c_self_contrast`] plus gradients with respect to the positive
/// and negative representations. `hinge` clips per-sample values at zero.
pub fn loss_c_self_contrast_with_grad(
    t_anchor: &Array2<f64>,
    v_pos: &Array2<f64>,
    n_neg: &Array2<f64>,
    gamma: f64,
    hinge: bool,
) -> Result<(f64, Array2<f64>, Array2<f64>), LossError> {
    self_contrast_impl(t_anchor, v_pos, n_neg, gamma, hinge, true)
        .map(|(l, g)| {
            let (gv, gn) = g.expect("grad requested");
            (l, gv, gn)
        })
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn info_nce_impl(
    t_anchor: &Array2<f64>,
    v_pos: &Array2<f64>,
    n_neg: &Array2<f64>,
    tau: f64,
    want_grad: bool,
) -> Result<(f64, Option<(Array2<f64>, Array2<f64>)>), LossError> {
    assert!(tau > 0.0, "temperature must be positive");
    let n = t_anchor.nrows();
    if n == 0 {
        return Err(LossError::EmptyBatch);
    }
    let tv = row_cosines(t_anchor, v_pos)?;
    let tn = row_cosines(t_anchor, n_neg)?;
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut sigma = Array1::<f64>::zeros(n);
    for ix in 0..n {
        let z = (tn.cos[ix] - tv.cos[ix]) / tau;
        // -log( exp(sv/tau) / (exp(sv/tau) + exp(sn/tau)) ) = softplus(z)
        loss += softplus(z);
        sigma[ix] = 1.0 / (1.0 + (-z).exp());
    }
    loss *= scale;
    if !want_grad {
        return Ok((loss, None));
    }
    let mut grad_v = Array2::<f64>::zeros(v_pos.raw_dim());
    let mut grad_n = Array2::<f64>::zeros(n_neg.raw_dim());
    let coeff_v = sigma.mapv(|s| -s * scale / tau);
    let coeff_n = sigma.mapv(|s| s * scale / tau);
    accumulate_cosine_grad(&tv, &coeff_v, &mut grad_v);
    accumulate_cosine_grad(&tn, &coeff_n, &mut grad_n);
    Ok((loss, Some((grad_v, grad_n))))
}

/// Contrastive-learning alternative to the self-contrast objective: a
/// two-term softmax with the text/expression pair as the positive and the
/// text/neutral pair as the negative. Non-negative.
pub fn loss_c_info_nce(
    t_anchor: &Array2<f64>,
    v_pos: &Array2<f64>,
    n_neg: &Array2<f64>,
    tau: f64,
) -> Result<f64, LossError> {
    info_nce_impl(t_anchor, v_pos, n_neg, tau, false).map(|(l, _)| l)
}

pub fn loss_c_info_nce_with_grad(
    t_anchor: &Array2<f64>,
    v_pos: &Array2<f64>,
    n_neg: &Array2<f64>,
    tau: f64,
) -> Result<(f64, Array2<f64>, Array2<f64>), LossError> {
    info_nce_impl(t_anchor, v_pos, n_neg, tau, true).map(|(l, g)| {
        let (gv, gn) = g.expect("grad requested");
        (l, gv, gn)
    })
}

/// Indices of samples whose label is not the neutral category.
pub fn non_neutral_indices(labels: &[usize], neutral_index: Option<usize>) -> Vec<usize> {
    match neutral_index {
        None => Vec::new(),
        Some(n) => labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != n)
            .map(|(ix, _)| ix)
            .collect(),
    }
}

fn gather_rows(m: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((rows.len(), m.ncols()));
    for (dst, &src) in rows.iter().enumerate() {
        out.row_mut(dst).assign(&m.row(src));
    }
    out
}

fn scatter_add_rows(target: &mut Array2<f64>, rows: &[usize], values: &Array2<f64>, weight: f64) {
    for (src, &dst) in rows.iter().enumerate() {
        let mut row = target.row_mut(dst);
        row.scaled_add(weight, &values.row(src));
    }
}

fn total_loss_impl(
    bank: &TextEmbeddingBank,
    reps: &Array2<f64>,
    neutral_reps: Option<&Array2<f64>>,
    labels: &[usize],
    cfg: &LossConfig,
    want_grad: bool,
) -> Result<(BatchLossResult, Option<TotalLossGrads>), LossError> {
    let (l_s, grad_s) = loss_s_impl(bank, reps, labels, cfg.tau, want_grad)?;
    let neutral_index = bank.categories().neutral_index();
    let selected = non_neutral_indices(labels, neutral_index);
    let n_e = selected.len();

    let mut grads = want_grad.then(|| TotalLossGrads {
        wrt_reps: grad_s.map(|g| g * cfg.lambda_s).expect("grad requested"),
        wrt_neutral: Array2::<f64>::zeros(reps.raw_dim()),
    });

    let (l_t, l_c);
    if n_e == 0 {
        l_t = None;
        l_c = None;
    } else {
        let neutral = neutral_reps.ok_or(LossError::MissingNeutralReps)?;
        check_same_shape(reps, neutral)?;
        let neutral_col = neutral_index.expect("n_e > 0 implies a neutral category");
        let v_sel = gather_rows(reps, &selected);
        let n_sel = gather_rows(neutral, &selected);
        // text side: ground-truth column minus the neutral column
        let mut t_sel = Array2::<f64>::zeros((n_e, bank.dim()));
        let mut delta_t = Array2::<f64>::zeros((n_e, bank.dim()));
        let t_n = bank.column(neutral_col);
        for (row, &sample) in selected.iter().enumerate() {
            let t_i = bank.column(labels[sample]);
            t_sel.row_mut(row).assign(&t_i);
            delta_t
                .row_mut(row)
                .assign(&(&t_i.to_owned() - &t_n.to_owned()));
        }
        let delta_v = &v_sel - &n_sel;

        let (lt_val, lt_grad) = loss_t_impl(&delta_t, &delta_v, want_grad)?;
        l_t = Some(lt_val);
        let (lc_val, lc_grads) = match cfg.contrast_variant {
            ContrastVariant::SelfContrast => {
                self_contrast_impl(&t_sel, &v_sel, &n_sel, cfg.gamma, cfg.hinge, want_grad)?
            }
            ContrastVariant::InfoNce => info_nce_impl(&t_sel, &v_sel, &n_sel, cfg.tau, want_grad)?,
        };
        l_c = Some(lc_val);

        if let Some(g) = grads.as_mut() {
            let g_delta_v = lt_grad.expect("grad requested");
            // delta_v = v - n, so the transformation term pushes v and n
            // in opposite directions
            scatter_add_rows(&mut g.wrt_reps, &selected, &g_delta_v, cfg.lambda_t);
            scatter_add_rows(&mut g.wrt_neutral, &selected, &g_delta_v, -cfg.lambda_t);
            let (gc_v, gc_n) = lc_grads.expect("grad requested");
            scatter_add_rows(&mut g.wrt_reps, &selected, &gc_v, cfg.lambda_c);
            scatter_add_rows(&mut g.wrt_neutral, &selected, &gc_n, cfg.lambda_c);
        }
    }

    let total = cfg.lambda_s * l_s
        + cfg.lambda_t * l_t.unwrap_or(0.0)
        + cfg.lambda_c * l_c.unwrap_or(0.0);
    Ok((
        BatchLossResult {
            l_s,
            l_t,
            l_c,
            total,
            n_e,
        },
        grads,
    ))
}

/// The weighted total objective with neutral gating: the similarity loss
/// runs over all samples; the transformation and contrast terms run only
/// over non-neutral samples and are skipped entirely when there are none
/// (or when the category set has no neutral class).
///
/// `neutral_reps` carries the transformation network's outputs, row-aligned
/// with `reps`; rows of neutral-labeled samples are ignored. It may be
/// `None` whenever the gated terms are inactive.
pub fn total_loss(
    bank: &TextEmbeddingBank,
    reps: &Array2<f64>,
    neutral_reps: Option<&Array2<f64>>,
    labels: &[usize],
    cfg: &LossConfig,
) -> Result<BatchLossResult, LossError> {
    total_loss_impl(bank, reps, neutral_reps, labels, cfg, false).map(|(r, _)| r)
}

/// [`total_loss`] plus gradients with respect to `reps` and `neutral_reps`.
pub fn total_loss_with_grad(
    bank: &TextEmbeddingBank,
    reps: &Array2<f64>,
    neutral_reps: Option<&Array2<f64>>,
    labels: &[usize],
    cfg: &LossConfig,
) -> Result<(BatchLossResult, TotalLossGrads), LossError> {
    total_loss_impl(bank, reps, neutral_reps, labels, cfg, true)
        .map(|(r, g)| (r, g.expect("grad requested")))
}

/// Softmax cross-entropy on raw logits, for the baseline classifier arm.
/// Returns the mean loss and its gradient with respect to the logits.
pub fn cross_entropy_with_grad(
    logits: &Array2<f64>,
    labels: &[usize],
) -> Result<(f64, Array2<f64>), LossError> {
    let b = logits.nrows();
    if b == 0 {
        return Err(LossError::EmptyBatch);
    }
    check_labels(labels, b, logits.ncols())?;
    let (lse, probs) = softmax_stats(logits);
    let mut loss = 0.0;
    for (ix, &label) in labels.iter().enumerate() {
        loss += lse[ix] - logits[[ix, label]];
    }
    loss /= b as f64;
    let mut grad = probs;
    for (ix, &label) in labels.iter().enumerate() {
        grad[[ix, label]] -= 1.0;
    }
    grad /= b as f64;
    Ok((loss, grad))
}

/// Mean of `sim(t_i, v_i) - sim(t_i, n_i)` over the given rows; the
/// quantity the self-contrast objective drives up.
pub fn mean_contrast_margin(
    t_anchor: &Array2<f64>,
    v_pos: &Array2<f64>,
    n_neg: &Array2<f64>,
) -> Result<f64, LossError> {
    let n = t_anchor.nrows();
    if n == 0 {
        return Err(LossError::EmptyBatch);
    }
    let tv = row_cosines(t_anchor, v_pos)?;
    let tn = row_cosines(t_anchor, n_neg)?;
    Ok((&tv.cos - &tn.cos).sum() / n as f64)
}

pub(crate) fn gather_bank_columns(
    bank: &TextEmbeddingBank,
    labels: &[usize],
    rows: &[usize],
) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((rows.len(), bank.dim()));
    for (dst, &src) in rows.iter().enumerate() {
        out.row_mut(dst).assign(&bank.column(labels[src]));
    }
    out
}
