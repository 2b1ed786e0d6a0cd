//! Toolkit for learning facial expression representations against a frozen
//! bank of text embeddings.
//!
//! Instead of a trained classifier head, class scores are cosine
//! similarities between an encoder's output and one frozen text embedding
//! per category. Training combines three objectives: a similarity
//! cross-entropy over the bank, a transformation loss that maps each
//! expression representation to a predicted neutral representation along
//! the textual expression-to-neutral direction, and a self-contrast margin
//! that pulls a representation toward its own text embedding and away from
//! its predicted neutral.
//!
//! The crate is organised around the pipeline stages:
//!
//! - [`category`], [`manifest`], [`synthetic`]: label spaces, dataset
//!   manifests, and a deterministic synthetic dataset generator.
//! - [`prompts`], [`provider`], [`bank`]: prompt templating, embedding
//!   providers, and the persisted `teb-v1` embedding bank.
//! - [`nn`], [`encoder`]: minimal f64 layers with hand-written backprop,
//!   the reference encoders, the dimension-matching projection, the
//!   neutral-transformation network, and the baseline classifier head.
//! - [`losses`]: all objective terms and their analytic gradients.
//! - [`schedule`], [`sampler`], [`augment`], [`train`], [`checkpoint`]:
//!   the training loop.
//! - [`eval`], [`plot`]: similarity-matching inference, metrics, and the
//!   2-D embedding plot.
//! - [`runconfig`]: the key=value run-configuration file.

pub mod augment;
pub mod bank;
pub mod category;
pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod eval;
pub mod losses;
pub mod manifest;
pub mod nn;
pub mod plot;
pub mod prompts;
pub mod provider;
pub mod runconfig;
pub mod sampler;
pub mod schedule;
pub mod synthetic;
pub mod train;

pub use bank::TextEmbeddingBank;
pub use category::CategorySet;
pub use config::{ContrastVariant, LossConfig, TrainConfig, UpdateMode};
pub use eval::EvalReport;
pub use manifest::DatasetManifest;
pub use prompts::PromptTemplate;

/// Derives a stream-specific sub-seed from the single run seed.
///
/// Every random stream in the toolkit (synthetic generator, parameter
/// init, sampler, augmentation, plot reducer) seeds its own ChaCha RNG
/// from `derive_seed(run_seed, "<stream>", ...)` so streams stay
/// independent and runs stay reproducible across platforms.
pub(crate) fn to_hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::new(), |mut acc, b| {
        let _ = write!(acc, "{b:02x}");
        acc
    })
}

pub fn derive_seed(base: u64, tag: &str, indices: &[u64]) -> u64 {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(tag.as_bytes());
    for ix in indices {
        hasher.update(ix.to_le_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}
