//! Epoch batch sampling, with optional inverse-frequency oversampling for
//! imbalanced datasets.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::derive_seed;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SamplerError {
    #[error("dataset is empty")]
    EmptyDataset,
}

/// Deterministic batch-index sampler.
///
/// Without oversampling each epoch is a seeded permutation of the dataset
/// chopped into batches (the last one possibly short). With oversampling,
/// `len` indices are drawn per epoch with replacement, each sample weighted
/// by the inverse frequency of its class so expected per-class counts come
/// out equal. Epoch streams are derived from `(seed, epoch)`, so resuming
/// at epoch `E` replays exactly the batches an uninterrupted run would see.
#[derive(Debug, Clone)]
pub struct Sampler {
    labels: Vec<usize>,
    weights: Option<Vec<f64>>, // cumulative, only in oversample mode
    seed: u64,
}

impl Sampler {
    pub fn new(labels: &[usize], n_classes: usize, oversample: bool, seed: u64) -> Result<Self, SamplerError> {
        if labels.is_empty() {
            return Err(SamplerError::EmptyDataset);
        }
        let weights = oversample.then(|| {
            let mut counts = vec![0usize; n_classes];
            for &l in labels {
                counts[l] += 1;
            }
            let mut cumulative = Vec::with_capacity(labels.len());
            let mut acc = 0.0;
            for &l in labels {
                acc += 1.0 / counts[l] as f64;
                cumulative.push(acc);
            }
            cumulative
        });
        Ok(Self {
            labels: labels.to_vec(),
            weights,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Batches per epoch at the given batch size.
    pub fn batches_per_epoch(&self, batch_size: usize) -> usize {
        self.len().div_ceil(batch_size)
    }

    /// Index order for one epoch.
    pub fn epoch_indices(&self, epoch: usize) -> Vec<usize> {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(self.seed, "sampler", &[epoch as u64]));
        match &self.weights {
            None => {
                let mut order: Vec<usize> = (0..self.len()).collect();
                // Fisher-Yates
                for i in (1..order.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    order.swap(i, j);
                }
                order
            }
            Some(cumulative) => {
                let total = *cumulative.last().expect("non-empty dataset");
                (0..self.len())
                    .map(|_| {
                        let u = rng.gen_range(0.0..total);
                        cumulative.partition_point(|&c| c <= u).min(self.len() - 1)
                    })
                    .collect()
            }
        }
    }

    /// Batch index lists for one epoch.
    pub fn epoch_batches(&self, epoch: usize, batch_size: usize) -> Vec<Vec<usize>> {
        assert!(batch_size >= 1);
        self.epoch_indices(epoch)
            .chunks(batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }
}
