//! Loss and training configuration.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("temperature must be positive, got {0}")]
    BadTau(f64),
    #[error("margin offset must lie in [0, 2], got {0}")]
    BadGamma(f64),
    #[error("loss weight {name} must be non-negative, got {value}")]
    BadLambda { name: &'static str, value: f64 },
    #[error("{name} must be {requirement}, got {value}")]
    BadField {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
}

/// Which contrast objective acts on the (anchor, positive, negative)
/// triple of text embedding, expression representation, and predicted
/// neutral representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContrastVariant {
    /// Plain margin expression `sim(t,n) - sim(t,v) + gamma`.
    SelfContrast,
    /// Two-term softmax contrastive loss with the positive pair in the
    /// numerator.
    InfoNce,
}

/// Weights and shape parameters of the composite objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Softmax temperature for the similarity logits.
    pub tau: f64,
    /// Margin offset keeping the self-contrast term non-negative; with
    /// `gamma = 2` the per-sample value lies in `[0, 4]`.
    pub gamma: f64,
    pub lambda_s: f64,
    pub lambda_t: f64,
    pub lambda_c: f64,
    pub contrast_variant: ContrastVariant,
    /// Clip the self-contrast term at zero per sample. Off by default:
    /// the margin offset alone is what keeps the written form non-negative.
    pub hinge: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.01,
            gamma: 2.0,
            lambda_s: 1.0,
            lambda_t: 1.0,
            lambda_c: 1.0,
            contrast_variant: ContrastVariant::SelfContrast,
            hinge: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.tau > 0.0) {
            return Err(ConfigError::BadTau(self.tau));
        }
        if !(0.0..=2.0).contains(&self.gamma) {
            return Err(ConfigError::BadGamma(self.gamma));
        }
        for (name, value) in [
            ("lambda_s", self.lambda_s),
            ("lambda_t", self.lambda_t),
            ("lambda_c", self.lambda_c),
        ] {
            if !(value >= 0.0) {
                return Err(ConfigError::BadLambda { name, value });
            }
        }
        Ok(())
    }
}

/// How parameters are updated from the per-batch losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMode {
    /// One update on the weighted total objective.
    Combined,
    /// Three updates in order: transformation loss, contrast loss (both
    /// gated on the batch containing non-neutral samples), then the
    /// similarity loss, each with recomputed gradients.
    Sequential,
}

/// Optimizer and loop settings. Defaults mirror the reference recipe:
/// 50 epochs, batch 64, SGD at 2e-3 with momentum 0.9 and weight decay
/// 5e-4 under a warm-up cosine schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub warmup_fraction: f64,
    pub update_mode: UpdateMode,
    pub oversample: bool,
    /// Random rotate, horizontal flip, and random erasing. Disable for
    /// determinism-sensitive fixtures on synthetic data whose classes are
    /// orientation-coded.
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            learning_rate: 2e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            warmup_fraction: 0.1,
            update_mode: UpdateMode::Combined,
            oversample: false,
            augment: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.epochs == 0 {
            return Err(ConfigError::BadField {
                name: "epochs",
                requirement: "positive",
                value: 0.0,
            });
        }
        if self.batch_size == 0 {
            return Err(ConfigError::BadField {
                name: "batch_size",
                requirement: "positive",
                value: 0.0,
            });
        }
        if !(self.learning_rate > 0.0) {
            return Err(ConfigError::BadField {
                name: "learning_rate",
                requirement: "positive",
                value: self.learning_rate,
            });
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(ConfigError::BadField {
                name: "momentum",
                requirement: "in [0, 1)",
                value: self.momentum,
            });
        }
        if !(self.weight_decay >= 0.0) {
            return Err(ConfigError::BadField {
                name: "weight_decay",
                requirement: "non-negative",
                value: self.weight_decay,
            });
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(ConfigError::BadField {
                name: "warmup_fraction",
                requirement: "in [0, 1)",
                value: self.warmup_fraction,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_recipe() {
        let t = TrainConfig::default();
        assert_eq!(t.epochs, 50);
        assert_eq!(t.batch_size, 64);
        assert_eq!(t.learning_rate, 2e-3);
        assert_eq!(t.momentum, 0.9);
        assert_eq!(t.weight_decay, 5e-4);
        let l = LossConfig::default();
        assert_eq!(l.tau, 0.01);
        assert_eq!(l.gamma, 2.0);
        assert_eq!((l.lambda_s, l.lambda_t, l.lambda_c), (1.0, 1.0, 1.0));
        t.validate().unwrap();
        l.validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range_values() {
        let mut l = LossConfig::default();
        l.tau = 0.0;
        assert_eq!(l.validate(), Err(ConfigError::BadTau(0.0)));
        l.tau = 0.01;
        l.gamma = 2.5;
        assert_eq!(l.validate(), Err(ConfigError::BadGamma(2.5)));
        let mut t = TrainConfig::default();
        t.momentum = 1.0;
        assert!(t.validate().is_err());
    }
}
