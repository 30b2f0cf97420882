//! Training hyperparameters and the flat run-configuration file.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::loss::LossConfig;
use super::optim::AdamConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_p0: f64,
    pub lr_p1: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub epochs_p0: usize,
    pub epochs_p1: usize,
    pub early_stop_patience: usize,
    /// Optimizer steps of linear learning-rate ramp at the start of each phase.
    pub warmup_steps: usize,
    pub seed: u64,
    /// Pooled own-price elasticity prior used by the warm start.
    pub beta_prior: f64,
    /// Trailing rolling-mean window (rows of a series) for warm-start targets.
    pub smoothing_window: usize,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            lr_p0: 1.686e-3,
            lr_p1: 1.625e-3,
            weight_decay: 1e-2,
            clip_norm: 1.0,
            plateau_factor: 0.5,
            plateau_patience: 5,
            epochs_p0: 50,
            epochs_p1: 100,
            early_stop_patience: 15,
            warmup_steps: 0,
            seed: 0,
            beta_prior: -2.0,
            smoothing_window: 8,
            val_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_p0 > 0.0 && self.lr_p1 > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.smoothing_window == 0 || self.batch_size == 0 {
            return Err(Error::Config("smoothing_window and batch_size must be at least 1".into()));
        }
        if !(self.beta_prior < 0.0) {
            return Err(Error::Config("beta_prior must be negative".into()));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return Err(Error::Config("plateau_factor must lie in (0, 1]".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            weight_decay: self.weight_decay,
            clip_norm: self.clip_norm,
            ..Default::default()
        }
    }
}

/// Model, training and loss settings read from one flat TOML file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub model: ModelConfig,
    #[serde(flatten)]
    pub train: TrainConfig,
    #[serde(flatten)]
    pub loss: LossConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.loss.validate()
    }

    /// Every key the file format accepts.
    pub fn known_keys() -> BTreeSet<String> {
        let table = toml::Table::try_from(RunConfig::default()).expect("default config serializes");
        table.keys().cloned().collect()
    }

    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let known = Self::known_keys();
        let unknown: Vec<&String> = table.keys().filter(|k| !known.contains(*k)).collect();
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown config keys: {unknown:?}")));
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
