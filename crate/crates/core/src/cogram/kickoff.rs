//! Short high-learning-rate training phase after a merge, followed by
//! ordinary fine-tuning at the base rate.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::Network;
use crate::seed;
use crate::train::{train, OptimizerConfig, OptimizerKind, TrainReport};

/// Kickoff runs must stay short.
pub const MAX_KICKOFF_EPOCHS: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KickoffConfig {
    pub optimizer: OptimizerKind,
    /// Fine-tuning learning rate; the kickoff uses `base_lr * lr_multiplier`.
    pub base_lr: f64,
    pub lr_multiplier: f64,
    pub kickoff_epochs: usize,
    pub finetune_epochs: usize,
    pub batch_size: usize,
    /// SGD momentum in both phases.
    pub momentum: f64,
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for KickoffConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            base_lr: 1e-3,
            lr_multiplier: 2.5,
            kickoff_epochs: 8,
            finetune_epochs: 20,
            batch_size: 64,
            momentum: 0.9,
            clip_norm: None,
            seed: 0,
        }
    }
}

impl KickoffConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kickoff_epochs > MAX_KICKOFF_EPOCHS {
            return Err(Error::Config(format!(
                "kickoff_epochs must be below 10, got {}",
                self.kickoff_epochs
            )));
        }
        if !(self.lr_multiplier > 0.0 && self.lr_multiplier.is_finite()) {
            return Err(Error::Config(format!(
                "lr_multiplier must be positive, got {}",
                self.lr_multiplier
            )));
        }
        if !(2.0..=3.0).contains(&self.lr_multiplier) {
            log::warn!(
                "kickoff lr_multiplier {} is outside the recommended range [2, 3]",
                self.lr_multiplier
            );
        }
        self.kickoff_optimizer().validate()?;
        self.finetune_optimizer().validate()
    }

    pub fn kickoff_optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.base_lr * self.lr_multiplier,
            ..self.finetune_optimizer()
        }
    }

    pub fn finetune_optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            kind: self.optimizer,
            learning_rate: self.base_lr,
            momentum: self.momentum,
            clip_norm: self.clip_norm,
            ..OptimizerConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KickoffReport {
    pub kickoff: TrainReport,
    pub finetune: TrainReport,
}

/// Kickoff at the elevated rate, then fine-tuning at the base rate. Each phase
/// starts with fresh optimizer state.
pub fn gradient_kickoff(
    m: &Network,
    data: &Dataset,
    config: &KickoffConfig,
) -> Result<(Network, KickoffReport)> {
    if data.is_empty() {
        return Err(Error::Usage("gradient kickoff needs training data".into()));
    }
    config.validate()?;
    let (kicked, kickoff) = train(
        m,
        data,
        &config.kickoff_optimizer(),
        config.kickoff_epochs,
        config.batch_size,
        seed::derive(config.seed, "kickoff"),
    )?;
    let (tuned, finetune) = train(
        &kicked,
        data,
        &config.finetune_optimizer(),
        config.finetune_epochs,
        config.batch_size,
        seed::derive(config.seed, "finetune"),
    )?;
    Ok((tuned, KickoffReport { kickoff, finetune }))
}
