//! Similarity-matching inference and accuracy metrics.

use ndarray::{Array2, Array4};
use thiserror::Error;

use crate::bank::TextEmbeddingBank;
use crate::category::CategorySet;
use crate::losses::{similarity_matrix, LossError};
use crate::manifest::{load_dataset, DataError, DatasetManifest};
use crate::nn::NnError;
use crate::train::{assemble_batch, Model};

const EVAL_BATCH: usize = 64;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("category mismatch between manifest and bank: {detail}")]
    CategoryMismatch { detail: String },
    #[error("categories not present in the bank: {0:?}")]
    UnmappableCategory(Vec<String>),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Shape(#[from] NnError),
}

/// Accuracy metrics over a labelled evaluation set.
///
/// `confusion` rows are true classes, columns predicted classes. For
/// cross-dataset evaluation, predictions of categories outside the
/// report's label space are tallied per true class in `off_space`; they
/// count as errors in that row's recall. Plain evaluation always leaves
/// `off_space` at zero, so there `per_class_recall[c]` is exactly
/// `confusion[c][c] / row_sum(c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    pub per_class_recall: Vec<f64>,
    pub mean_accuracy: f64,
    pub confusion: Array2<u64>,
    pub n_samples: usize,
    /// Classes with no true samples; excluded from `mean_accuracy`.
    pub empty_classes: Vec<usize>,
    pub off_space: Vec<u64>,
}

impl EvalReport {
    /// Builds a report from per-sample truths and predictions.
    /// A `None` prediction is one outside the report's label space.
    pub fn from_predictions(
        truths: &[usize],
        predictions: &[Option<usize>],
        n_classes: usize,
    ) -> Result<Self, EvalError> {
        assert_eq!(truths.len(), predictions.len());
        if truths.is_empty() {
            return Err(EvalError::EmptyDataset);
        }
        let mut confusion = Array2::<u64>::zeros((n_classes, n_classes));
        let mut off_space = vec![0u64; n_classes];
        for (&t, &p) in truths.iter().zip(predictions) {
            assert!(t < n_classes, "truth label out of range");
            match p {
                Some(p) => {
                    assert!(p < n_classes, "prediction out of range");
                    confusion[[t, p]] += 1;
                }
                None => off_space[t] += 1,
            }
        }
        let n_samples = truths.len();
        let correct: u64 = (0..n_classes).map(|c| confusion[[c, c]]).sum();
        let mut per_class_recall = vec![0.0; n_classes];
        let mut empty_classes = Vec::new();
        let mut recall_sum = 0.0;
        let mut nonempty = 0usize;
        for c in 0..n_classes {
            let row_total: u64 = confusion.row(c).sum() + off_space[c];
            if row_total == 0 {
                empty_classes.push(c);
                continue;
            }
            let recall = confusion[[c, c]] as f64 / row_total as f64;
            per_class_recall[c] = recall;
            recall_sum += recall;
            nonempty += 1;
        }
        if !empty_classes.is_empty() {
            log::warn!("classes with no samples excluded from mean accuracy: {empty_classes:?}");
        }
        Ok(Self {
            overall_accuracy: correct as f64 / n_samples as f64,
            per_class_recall,
            mean_accuracy: if nonempty > 0 { recall_sum / nonempty as f64 } else { 0.0 },
            confusion,
            n_samples,
            empty_classes,
            off_space,
        })
    }
}

/// Argmax over cosine similarities against the bank columns; ties break
/// to the lowest class index.
pub fn predict_reps(bank: &TextEmbeddingBank, reps: &Array2<f64>) -> Result<Vec<usize>, LossError> {
    let cos = similarity_matrix(bank, reps)?;
    Ok(cos
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            let mut best_value = row[0];
            for (ix, &v) in row.iter().enumerate().skip(1) {
                if v > best_value {
                    best = ix;
                    best_value = v;
                }
            }
            best
        })
        .collect())
}

/// Encodes a batch of images and predicts by similarity matching.
pub fn predict(
    model: &Model,
    bank: &TextEmbeddingBank,
    images: &Array4<f64>,
) -> Result<Vec<usize>, EvalError> {
    let reps = model.reps(images)?;
    Ok(predict_reps(bank, &reps)?)
}

fn check_categories(manifest: &CategorySet, bank: &CategorySet) -> Result<(), EvalError> {
    if manifest != bank {
        return Err(EvalError::CategoryMismatch {
            detail: format!("manifest has [{manifest}], bank has [{bank}]"),
        });
    }
    Ok(())
}

fn batched_predictions(
    model: &Model,
    bank: &TextEmbeddingBank,
    manifest: &DatasetManifest,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    let dataset = load_dataset(manifest)?;
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let mut truths = Vec::with_capacity(dataset.len());
    let mut preds = Vec::with_capacity(dataset.len());
    for chunk in indices.chunks(EVAL_BATCH) {
        let batch = assemble_batch(&dataset, chunk, None);
        let p = predict(model, bank, &batch.images)?;
        preds.extend(p);
        truths.extend(batch.labels);
    }
    Ok((truths, preds))
}

/// Evaluates a text-supervised model on a manifest whose categories match
/// the bank exactly.
pub fn evaluate(
    model: &Model,
    bank: &TextEmbeddingBank,
    manifest: &DatasetManifest,
) -> Result<EvalReport, EvalError> {
    check_categories(&manifest.categories, bank.categories())?;
    let (truths, preds) = batched_predictions(model, bank, manifest)?;
    let wrapped: Vec<Option<usize>> = preds.into_iter().map(Some).collect();
    EvalReport::from_predictions(&truths, &wrapped, manifest.categories.len())
}

/// Evaluates the baseline classifier arm: predictions are argmax head
/// logits, ties to the lowest index.
pub fn evaluate_baseline(model: &Model, manifest: &DatasetManifest) -> Result<EvalReport, EvalError> {
    let dataset = load_dataset(manifest)?;
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let head = model.head.as_ref().expect("baseline model has a head");
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let mut truths = Vec::new();
    let mut preds = Vec::new();
    for chunk in indices.chunks(EVAL_BATCH) {
        let batch = assemble_batch(&dataset, chunk, None);
        let reps = model.reps(&batch.images)?;
        let logits = head.affine.forward(&reps);
        for row in logits.rows() {
            let mut best = 0usize;
            let mut best_value = row[0];
            for (ix, &v) in row.iter().enumerate().skip(1) {
                if v > best_value {
                    best = ix;
                    best_value = v;
                }
            }
            preds.push(Some(best));
        }
        truths.extend(batch.labels);
    }
    EvalReport::from_predictions(&truths, &preds, manifest.categories.len())
}

/// Cross-dataset evaluation: the model and bank come from dataset A; the
/// manifest describes dataset B, whose categories must be a name-matched
/// subset of the bank's. Predictions still range over the bank's full
/// column set; predicting a category absent from B counts as an error
/// against the sample's true class.
pub fn cross_evaluate(
    model: &Model,
    bank: &TextEmbeddingBank,
    manifest_b: &DatasetManifest,
) -> Result<EvalReport, EvalError> {
    let unmatched: Vec<String> = manifest_b
        .categories
        .names()
        .iter()
        .filter(|name| bank.categories().index_of(name).is_none())
        .cloned()
        .collect();
    if !unmatched.is_empty() {
        return Err(EvalError::UnmappableCategory(unmatched));
    }
    let dataset = load_dataset(manifest_b)?;
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    // bank-space index -> B-space index, by exact name
    let remap: Vec<Option<usize>> = bank
        .categories()
        .names()
        .iter()
        .map(|name| manifest_b.categories.index_of(name))
        .collect();
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let mut truths = Vec::new();
    let mut preds = Vec::new();
    for chunk in indices.chunks(EVAL_BATCH) {
        let batch = assemble_batch(&dataset, chunk, None);
        let bank_space = predict(model, bank, &batch.images)?;
        preds.extend(bank_space.into_iter().map(|p| remap[p]));
        truths.extend(batch.labels);
    }
    EvalReport::from_predictions(&truths, &preds, manifest_b.categories.len())
}

/// Confusion matrix as CSV with category names on both axes. A final
/// `outside` column appears only when cross-dataset evaluation produced
/// predictions outside the report's label space.
pub fn format_confusion_csv(report: &EvalReport, categories: &CategorySet) -> String {
    let c = categories.len();
    let has_off_space = report.off_space.iter().any(|&x| x > 0);
    let mut out = String::from("true\\predicted");
    for name in categories.names() {
        out.push(',');
        out.push_str(name);
    }
    if has_off_space {
        out.push_str(",outside");
    }
    out.push('\n');
    for r in 0..c {
        out.push_str(categories.name(r));
        for col in 0..c {
            out.push_str(&format!(",{}", report.confusion[[r, col]]));
        }
        if has_off_space {
            out.push_str(&format!(",{}", report.off_space[r]));
        }
        out.push('\n');
    }
    out
}

/// Human-readable summary printed by the CLI.
pub fn format_report(report: &EvalReport, categories: &CategorySet) -> String {
    let mut out = format!(
        "samples: {}\noverall accuracy: {:.4}\nmean accuracy: {:.4}\n",
        report.n_samples, report.overall_accuracy, report.mean_accuracy
    );
    for (c, name) in categories.names().iter().enumerate() {
        if report.empty_classes.contains(&c) {
            out.push_str(&format!("  {name}: no samples\n"));
        } else {
            out.push_str(&format!("  {name}: recall {:.4}\n", report.per_class_recall[c]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::PromptTemplate;

    fn basis_bank(names: &[&str]) -> TextEmbeddingBank {
        let c = names.len();
        let columns: Vec<Vec<f64>> = (0..c)
            .map(|i| {
                let mut v = vec![0.0; c];
                v[i] = 1.0;
                v
            })
            .collect();
        TextEmbeddingBank::from_columns(
            columns,
            CategorySet::new(names).unwrap(),
            "test",
            PromptTemplate::default(),
        )
        .unwrap()
    }

    #[test]
    fn predict_exact_match_and_scale_invariance() {
        let bank = basis_bank(&["a", "b", "c", "d"]);
        let mut reps = Array2::<f64>::zeros((1, 4));
        reps[[0, 3]] = 1.0;
        assert_eq!(predict_reps(&bank, &reps).unwrap(), vec![3]);
        let scaled = reps * 100.0;
        assert_eq!(predict_reps(&bank, &scaled).unwrap(), vec![3]);
    }

    #[test]
    fn predict_tie_breaks_low() {
        let bank = basis_bank(&["a", "b", "c"]);
        // equidistant from columns 0 and 1
        let reps = ndarray::array![[1.0, 1.0, 0.0]];
        assert_eq!(predict_reps(&bank, &reps).unwrap(), vec![0]);
    }

    #[test]
    fn report_perfect_predictor() {
        let truths = vec![0, 1, 2, 0, 1, 2];
        let preds: Vec<Option<usize>> = truths.iter().map(|&t| Some(t)).collect();
        let r = EvalReport::from_predictions(&truths, &preds, 3).unwrap();
        assert_eq!(r.overall_accuracy, 1.0);
        assert_eq!(r.mean_accuracy, 1.0);
        assert_eq!(r.confusion[[2, 2]], 2);
        assert_eq!(r.confusion.sum(), 6);
    }

    #[test]
    fn report_constant_predictor_on_balanced_set() {
        let truths = vec![0, 0, 1, 1, 2, 2];
        let preds = vec![Some(0); 6];
        let r = EvalReport::from_predictions(&truths, &preds, 3).unwrap();
        assert!((r.overall_accuracy - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.mean_accuracy - 1.0 / 3.0).abs() < 1e-12);
        // one nonzero column
        for c in 0..3 {
            assert_eq!(r.confusion[[c, 0]], 2);
            assert_eq!(r.confusion[[c, 1]], 0);
            assert_eq!(r.confusion[[c, 2]], 0);
        }
    }

    #[test]
    fn report_counts_off_space_as_errors() {
        // 4 samples over 2 B-classes; one prediction lands outside B
        let truths = vec![0, 0, 1, 1];
        let preds = vec![Some(0), None, Some(1), Some(0)];
        let r = EvalReport::from_predictions(&truths, &preds, 2).unwrap();
        assert_eq!(r.n_samples, 4);
        assert_eq!(r.off_space, vec![1, 0]);
        assert!((r.per_class_recall[0] - 0.5).abs() < 1e-12);
        assert!((r.per_class_recall[1] - 0.5).abs() < 1e-12);
        assert!((r.overall_accuracy - 0.5).abs() < 1e-12);
        // conservation: confusion entries plus off-space equal n
        assert_eq!(r.confusion.sum() + r.off_space.iter().sum::<u64>(), 4);
    }

    #[test]
    fn empty_rows_are_flagged_and_excluded() {
        let truths = vec![0, 0];
        let preds = vec![Some(0), Some(2)];
        let r = EvalReport::from_predictions(&truths, &preds, 3).unwrap();
        assert_eq!(r.empty_classes, vec![1, 2]);
        assert!((r.mean_accuracy - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            EvalReport::from_predictions(&[], &[], 2),
            Err(EvalError::EmptyDataset)
        ));
    }
}
