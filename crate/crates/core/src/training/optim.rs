//! AdamW with decoupled weight decay on the decay group, global-norm
//! clipping and a reduce-on-plateau learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::backward::Freeze;
use crate::model::params::{Group, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Maximum global gradient norm; non-positive disables clipping.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
            clip_norm: 1.0,
        }
    }
}

/// Rescales `grads` in place so its global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if max_norm > 0.0 && norm > max_norm {
        let scale = max_norm / norm;
        for (_, block) in grads.blocks_mut() {
            block.iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub cfg: AdamConfig,
    pub m: ModelParams,
    pub v: ModelParams,
    pub t: u64,
}

impl AdamW {
    pub fn new(params: &ModelParams, cfg: AdamConfig) -> AdamW {
        AdamW {
            cfg,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    /// Clips `grads` and applies one update. Blocks frozen under `freeze`
    /// are left untouched, moments included.
    pub fn step(&mut self, params: &mut ModelParams, mut grads: ModelParams, lr: f64, freeze: Freeze) -> f64 {
        let norm = clip_global_norm(&mut grads, self.cfg.clip_norm);
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let blocks = params
            .blocks_mut()
            .into_iter()
            .zip(grads.blocks())
            .zip(self.m.blocks_mut().into_iter().zip(self.v.blocks_mut()));
        for (((info, p), (_, g)), ((_, m), (_, v))) in blocks {
            if freeze == Freeze::WarmStart && info.frozen_in_warm_start {
                continue;
            }
            let decay = if info.group == Group::Decay { c.weight_decay } else { 0.0 };
            for idx in 0..p.len() {
                m[idx] = c.beta1 * m[idx] + (1.0 - c.beta1) * g[idx];
                v[idx] = c.beta2 * v[idx] + (1.0 - c.beta2) * g[idx] * g[idx];
                let update = (m[idx] / bc1) / ((v[idx] / bc2).sqrt() + c.eps);
                p[idx] -= lr * (update + decay * p[idx]);
            }
        }
        norm
    }
}

/// Halves the learning rate after `patience` epochs without improvement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub best: f64,
    pub bad_epochs: usize,
}

impl Plateau {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Plateau {
        Plateau {
            lr,
            factor,
            patience,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Records a validation metric and returns the learning rate to use next.
    pub fn observe(&mut self, metric: f64) -> f64 {
        if metric < self.best {
            self.best = metric;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs > self.patience {
                self.lr *= self.factor;
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}
