//! The key=value run-configuration file read by the command-line surface.
//!
//! Every key maps to exactly one config field; unknown and duplicate keys
//! are rejected with their line number, so a parse is either a complete
//! config or a located error.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, ContrastVariant, LossConfig, TrainConfig, UpdateMode};
use crate::nn::Activation;

#[derive(Debug, Error)]
pub enum RunConfigError {
    #[error("config line {line}: expected key=value, got {text:?}")]
    NotKeyValue { line: usize, text: String },
    #[error("config line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("config line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("config line {line}: bad value {value:?} for {key}")]
    BadValue {
        line: usize,
        key: &'static str,
        value: String,
    },
    #[error(transparent)]
    Invalid(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Full run configuration: optimizer and loss settings plus the
/// architecture and provider choices.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub encoder: String,
    pub provider: String,
    /// Builtin template id (`t1`..`t9`) or a literal template string.
    pub template: String,
    /// Embedding dimension used by the stub provider.
    pub embed_dim: usize,
    pub provider_seed: u64,
    pub fn_activation: Activation,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            loss: LossConfig::default(),
            encoder: "tiny-cnn".into(),
            provider: "stub".into(),
            template: "t9".into(),
            embed_dim: 512,
            provider_seed: 0,
            fn_activation: Activation::Relu,
        }
    }
}

pub fn parse_run_config(text: &str) -> Result<RunConfig, RunConfigError> {
    let mut cfg = RunConfig::default();
    let mut seen: Vec<String> = Vec::new();
    for (ix, raw) in text.lines().enumerate() {
        let line_no = ix + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| RunConfigError::NotKeyValue {
            line: line_no,
            text: line.to_string(),
        })?;
        let key = key.trim();
        let value = value.trim();
        if seen.iter().any(|k| k == key) {
            return Err(RunConfigError::DuplicateKey {
                line: line_no,
                key: key.to_string(),
            });
        }
        seen.push(key.to_string());

        macro_rules! parse_as {
            ($t:ty, $k:expr) => {
                value.parse::<$t>().map_err(|_| RunConfigError::BadValue {
                    line: line_no,
                    key: $k,
                    value: value.to_string(),
                })?
            };
        }
        match key {
            "epochs" => cfg.train.epochs = parse_as!(usize, "epochs"),
            "batch_size" => cfg.train.batch_size = parse_as!(usize, "batch_size"),
            "learning_rate" => cfg.train.learning_rate = parse_as!(f64, "learning_rate"),
            "momentum" => cfg.train.momentum = parse_as!(f64, "momentum"),
            "weight_decay" => cfg.train.weight_decay = parse_as!(f64, "weight_decay"),
            "warmup_fraction" => cfg.train.warmup_fraction = parse_as!(f64, "warmup_fraction"),
            "update_mode" => {
                cfg.train.update_mode = match value {
                    "combined" => UpdateMode::Combined,
                    "sequential" => UpdateMode::Sequential,
                    _ => {
                        return Err(RunConfigError::BadValue {
                            line: line_no,
                            key: "update_mode",
                            value: value.to_string(),
                        })
                    }
                }
            }
            "oversample" => cfg.train.oversample = parse_as!(bool, "oversample"),
            "augment" => cfg.train.augment = parse_as!(bool, "augment"),
            "seed" => cfg.train.seed = parse_as!(u64, "seed"),
            "tau" => cfg.loss.tau = parse_as!(f64, "tau"),
            "gamma" => cfg.loss.gamma = parse_as!(f64, "gamma"),
            "lambda_s" => cfg.loss.lambda_s = parse_as!(f64, "lambda_s"),
            "lambda_t" => cfg.loss.lambda_t = parse_as!(f64, "lambda_t"),
            "lambda_c" => cfg.loss.lambda_c = parse_as!(f64, "lambda_c"),
            "contrast_variant" => {
                cfg.loss.contrast_variant = match value {
                    "self_contrast" => ContrastVariant::SelfContrast,
                    "info_nce" => ContrastVariant::InfoNce,
                    _ => {
                        return Err(RunConfigError::BadValue {
                            line: line_no,
                            key: "contrast_variant",
                            value: value.to_string(),
                        })
                    }
                }
            }
            "hinge" => cfg.loss.hinge = parse_as!(bool, "hinge"),
            "encoder" => cfg.encoder = value.to_string(),
            "provider" => cfg.provider = value.to_string(),
            "template" => cfg.template = value.to_string(),
            "embed_dim" => cfg.embed_dim = parse_as!(usize, "embed_dim"),
            "provider_seed" => cfg.provider_seed = parse_as!(u64, "provider_seed"),
            "fn_activation" => {
                cfg.fn_activation =
                    Activation::parse(value).ok_or_else(|| RunConfigError::BadValue {
                        line: line_no,
                        key: "fn_activation",
                        value: value.to_string(),
                    })?
            }
            _ => {
                return Err(RunConfigError::UnknownKey {
                    line: line_no,
                    key: key.to_string(),
                })
            }
        }
    }
    cfg.train.validate()?;
    cfg.loss.validate()?;
    if cfg.embed_dim < 2 {
        return Err(RunConfigError::BadValue {
            line: 0,
            key: "embed_dim",
            value: cfg.embed_dim.to_string(),
        });
    }
    Ok(cfg)
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, RunConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_run_config(&text)
}
