//! Text-embedding providers.
//!
//! The bank builder only depends on the [`EmbeddingProvider`] contract, so
//! any frozen text encoder can sit behind it. Three implementations ship:
//! a deterministic stub for tests, a file provider re-serving a previously
//! exported bank, and a subprocess adapter for driving a real VLM text
//! encoder without linking one.

use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider {provider} failed on prompt {prompt:?}: {message}")]
    Failed {
        provider: String,
        prompt: String,
        message: String,
    },
    #[error("provider {provider} returned mixed dimensions: {first} then {got} for prompt {prompt:?}")]
    MixedDimensions {
        provider: String,
        prompt: String,
        first: usize,
        got: usize,
    },
}

/// A frozen text encoder: maps prompts to fixed-dimension embeddings,
/// deterministically per prompt within one configuration.
pub trait EmbeddingProvider {
    fn id(&self) -> String;

    /// One vector per prompt, all sharing a single dimension.
    fn embed(&self, prompts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;

    /// Whether `embed` may be called concurrently.
    fn reentrant(&self) -> bool {
        false
    }
}

/// Checks the all-same-dimension contract, naming the offending prompt.
pub fn check_dimensions(
    provider: &str,
    prompts: &[String],
    vectors: &[Vec<f64>],
) -> Result<(), ProviderError> {
    let Some(first) = vectors.first() else {
        return Ok(());
    };
    for (prompt, v) in prompts.iter().zip(vectors) {
        if v.len() != first.len() {
            return Err(ProviderError::MixedDimensions {
                provider: provider.to_string(),
                prompt: prompt.clone(),
                first: first.len(),
                got: v.len(),
            });
        }
    }
    Ok(())
}

/// Deterministic seeded-hash unit vectors; the test and CI provider.
///
/// Each prompt is hashed together with the provider seed and dimension,
/// and the digest seeds a ChaCha stream of standard normals that is then
/// normalized. Same prompt, same vector; distinct prompts get distinct
/// (near-orthogonal in high dimension) vectors.
#[derive(Debug, Clone)]
pub struct StubProvider {
    pub dim: usize,
    pub seed: u64,
}

impl StubProvider {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 2, "embedding dimension must be at least 2");
        Self { dim, seed }
    }

    fn vector_for(&self, prompt: &str) -> Vec<f64> {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update((self.dim as u64).to_le_bytes());
        hasher.update(prompt.as_bytes());
        let digest = hasher.finalize();
        let word = u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"));
        let mut rng = ChaCha8Rng::seed_from_u64(word);
        // Box-Muller keeps the dependency surface to a uniform RNG
        let mut v = Vec::with_capacity(self.dim);
        while v.len() < self.dim {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            v.push(r * theta.cos());
            if v.len() < self.dim {
                v.push(r * theta.sin());
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        v
    }
}

impl EmbeddingProvider for StubProvider {
    fn id(&self) -> String {
        format!("stub-s{}-d{}", self.seed, self.dim)
    }

    fn embed(&self, prompts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(prompts.iter().map(|p| self.vector_for(p)).collect())
    }

    fn reentrant(&self) -> bool {
        true
    }
}

/// Re-serves embeddings from a previously exported bank: each known
/// prompt (the bank's template filled with each category name) maps to
/// its stored column.
#[derive(Debug, Clone)]
pub struct FileProvider {
    provider_id: String,
    entries: Vec<(String, Vec<f64>)>,
}

impl FileProvider {
    pub fn from_bank(bank: &crate::bank::TextEmbeddingBank) -> Self {
        let prompts = crate::prompts::build_prompts(bank.template(), bank.categories());
        let entries = prompts
            .into_iter()
            .enumerate()
            .map(|(c, p)| (p, bank.column(c).to_vec()))
            .collect();
        Self {
            provider_id: bank.provider_id().to_string(),
            entries,
        }
    }
}

impl EmbeddingProvider for FileProvider {
    fn id(&self) -> String {
        self.provider_id.clone()
    }

    fn embed(&self, prompts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        prompts
            .iter()
            .map(|p| {
                self.entries
                    .iter()
                    .find(|(known, _)| known == p)
                    .map(|(_, v)| v.clone())
                    .ok_or_else(|| ProviderError::Failed {
                        provider: self.id(),
                        prompt: p.clone(),
                        message: "prompt not present in the source bank".into(),
                    })
            })
            .collect()
    }

    fn reentrant(&self) -> bool {
        true
    }
}

/// Subprocess adapter for a real frozen text encoder.
///
/// The command receives prompts on stdin, one per line, and must print one
/// embedding per prompt on stdout as space-separated floats. This keeps
/// heavyweight VLM stacks out of the build: point it at any script that
/// wraps the encoder of your choice.
#[derive(Debug, Clone)]
pub struct CommandProvider {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl CommandProvider {
    pub fn new(program: impl Into<PathBuf>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
        }
    }

    fn fail(&self, prompt: &str, message: impl Into<String>) -> ProviderError {
        ProviderError::Failed {
            provider: self.id(),
            prompt: prompt.to_string(),
            message: message.into(),
        }
    }
}

impl EmbeddingProvider for CommandProvider {
    fn id(&self) -> String {
        let name = self
            .program
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "cmd".into());
        format!("vlm-{name}")
    }

    fn embed(&self, prompts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let mut all = prompts.join("\n");
        all.push('\n');
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| self.fail(prompts.first().map_or("", String::as_str), e.to_string()))?;
        child
            .stdin
            .take()
            .expect("stdin piped")
            .write_all(all.as_bytes())
            .map_err(|e| self.fail("", e.to_string()))?;
        let output = child
            .wait_with_output()
            .map_err(|e| self.fail("", e.to_string()))?;
        if !output.status.success() {
            return Err(self.fail(
                "",
                format!(
                    "command exited with {}: {}",
                    output.status,
                    String::from_utf8_lossy(&output.stderr).trim()
                ),
            ));
        }
        let stdout = String::from_utf8_lossy(&output.stdout);
        let lines: Vec<&str> = stdout.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.len() != prompts.len() {
            return Err(self.fail(
                "",
                format!("expected {} output lines, got {}", prompts.len(), lines.len()),
            ));
        }
        let mut vectors = Vec::with_capacity(prompts.len());
        for (prompt, line) in prompts.iter().zip(lines) {
            let v: Result<Vec<f64>, _> = line
                .split_whitespace()
                .map(|tok| tok.parse::<f64>())
                .collect();
            let v = v.map_err(|e| self.fail(prompt, format!("bad float: {e}")))?;
            if v.is_empty() {
                return Err(self.fail(prompt, "empty embedding line"));
            }
            vectors.push(v);
        }
        check_dimensions(&self.id(), prompts, &vectors)?;
        Ok(vectors)
    }
}
