//! Synthetic panels drawn from a constant-elasticity demand system with known
//! ground truth.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::raw::RawRow;
use crate::error::{Error, Result};
use crate::field::ConstantElasticityModel;
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_products: usize,
    pub n_stores: usize,
    pub n_weeks: usize,
    /// Own elasticities; drawn uniformly from `own_range` when empty.
    pub own: Vec<f64>,
    /// Row-major n x n cross matrix (diagonal ignored); drawn when empty.
    pub cross: Vec<Vec<f64>>,
    pub own_range: (f64, f64),
    pub max_abs_cross: f64,
    /// Baseline demand (liters) at the base price; drawn when empty.
    pub baseline_demand: Vec<f64>,
    /// Base price per liter; drawn when empty.
    pub base_price: Vec<f64>,
    /// Stationary standard deviation of log-price deviations from the base.
    pub price_sd: f64,
    /// AR(1) coefficient of the deviations; 1 gives a random walk.
    pub price_persistence: f64,
    /// Log-price deviations from the base are clamped to this bound.
    pub price_bound: f64,
    pub promo_prob: f64,
    pub promo_discount: f64,
    pub store_effect_sd: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_products: 5,
            n_stores: 3,
            n_weeks: 200,
            own: Vec::new(),
            cross: Vec::new(),
            own_range: (-3.0, -1.0),
            max_abs_cross: 0.5,
            baseline_demand: Vec::new(),
            base_price: Vec::new(),
            price_sd: 0.15,
            price_persistence: 0.0,
            price_bound: 0.35,
            promo_prob: 0.12,
            promo_discount: 0.15,
            store_effect_sd: 0.2,
            noise_sd: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.n_products;
        if n == 0 || self.n_stores == 0 || self.n_weeks == 0 {
            return Err(Error::Config("synthetic panel needs products, stores and weeks".into()));
        }
        let sized = |len: usize, name: &str| {
            if len != 0 && len != n {
                Err(Error::Config(format!("{name} must have {n} entries")))
            } else {
                Ok(())
            }
        };
        sized(self.own.len(), "own")?;
        sized(self.cross.len(), "cross")?;
        sized(self.baseline_demand.len(), "baseline_demand")?;
        sized(self.base_price.len(), "base_price")?;
        if self.cross.iter().any(|row| row.len() != n) {
            return Err(Error::Config(format!("cross rows must have {n} entries")));
        }
        if self.own.iter().any(|e| !(*e < 0.0)) {
            return Err(Error::Config("own elasticities must be negative".into()));
        }
        if !(self.own_range.0 <= self.own_range.1 && self.own_range.1 < 0.0) {
            return Err(Error::Config("own_range must be an ordered negative interval".into()));
        }
        if self.baseline_demand.iter().chain(&self.base_price).any(|v| !(*v > 0.0)) {
            return Err(Error::Config("baseline demand and base price must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.price_persistence) {
            return Err(Error::Config("price_persistence must lie in [0, 1]".into()));
        }
        let nonneg = [self.price_sd, self.price_bound, self.store_effect_sd, self.noise_sd, self.max_abs_cross];
        if nonneg.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("scales must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.promo_prob) || !(0.0..1.0).contains(&self.promo_discount) {
            return Err(Error::Config("promo_prob must lie in [0,1] and promo_discount in [0,1)".into()));
        }
        Ok(())
    }
}

/// The exact demand system behind a synthetic panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub upcs: Vec<String>,
    pub stores: Vec<String>,
    /// Full elasticity matrix: own on the diagonal, cross off it.
    pub elasticity: Vec<Vec<f64>>,
    pub base_price: Vec<f64>,
    pub baseline_demand: Vec<f64>,
    pub store_effects: Vec<f64>,
    pub config: SynthConfig,
}

impl GroundTruth {
    pub fn own(&self) -> Vec<f64> {
        (0..self.upcs.len()).map(|i| self.elasticity[i][i]).collect()
    }

    /// The noiseless demand system of one store.
    pub fn store_model(&self, store: usize) -> Result<ConstantElasticityModel> {
        let own = self.own();
        let cross = self.elasticity.clone();
        let scale = self.store_effects[store].exp();
        ConstantElasticityModel::new(
            own,
            cross,
            self.base_price.clone(),
            self.baseline_demand.iter().map(|v| v * scale).collect(),
        )
    }
}

pub fn upc_code(i: usize) -> String {
    format!("P{i:03}")
}

pub fn store_code(s: usize) -> String {
    format!("S{s:03}")
}

/// Draws log-price deviations from a bounded AR(1) process with promo discounts and sets
/// log demand from the constant-elasticity closed form plus Gaussian noise.
/// Every product is sold in one-liter units so `units_sold` equals liters.
pub fn generate_synthetic_panel(cfg: &SynthConfig) -> Result<(Vec<RawRow>, GroundTruth)> {
    cfg.validate()?;
    let n = cfg.n_products;
    let mut rng = substream(cfg.seed, "data");
    let own: Vec<f64> = if cfg.own.is_empty() {
        (0..n).map(|_| rng.random_range(cfg.own_range.0..=cfg.own_range.1)).collect()
    } else {
        cfg.own.clone()
    };
    let mut elasticity = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            elasticity[i][j] = if i == j {
                own[i]
            } else if cfg.cross.is_empty() {
                rng.random_range(-cfg.max_abs_cross..=cfg.max_abs_cross)
            } else {
                cfg.cross[i][j]
            };
        }
    }
    let baseline_demand: Vec<f64> = if cfg.baseline_demand.is_empty() {
        (0..n).map(|_| rng.random_range(20.0..200.0)).collect()
    } else {
        cfg.baseline_demand.clone()
    };
    let base_price: Vec<f64> = if cfg.base_price.is_empty() {
        (0..n).map(|_| rng.random_range(1.0..6.0)).collect()
    } else {
        cfg.base_price.clone()
    };
    let store_noise = Normal::new(0.0, cfg.store_effect_sd).map_err(|e| Error::Config(e.to_string()))?;
    let store_effects: Vec<f64> = (0..cfg.n_stores).map(|_| store_noise.sample(&mut rng)).collect();
    // keeps the stationary spread at price_sd; a random walk steps by price_sd
    let innovation = if cfg.price_persistence < 1.0 {
        cfg.price_sd * (1.0 - cfg.price_persistence.powi(2)).sqrt()
    } else {
        cfg.price_sd
    };
    let step = Normal::new(0.0, innovation).map_err(|e| Error::Config(e.to_string()))?;
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::Config(e.to_string()))?;

    let mut rows = Vec::with_capacity(n * cfg.n_stores * cfg.n_weeks);
    for (s, effect) in store_effects.iter().enumerate() {
        let mut dev = vec![0.0f64; n];
        for week in 1..=cfg.n_weeks as i64 {
            let mut log_rel = vec![0.0; n];
            let mut promo = vec![false; n];
            for i in 0..n {
                let next = cfg.price_persistence * dev[i] + step.sample(&mut rng);
                dev[i] = next.clamp(-cfg.price_bound, cfg.price_bound);
                promo[i] = rng.random::<f64>() < cfg.promo_prob;
                log_rel[i] = dev[i] + if promo[i] { (1.0 - cfg.promo_discount).ln() } else { 0.0 };
            }
            for i in 0..n {
                let mut y = baseline_demand[i].ln() + effect;
                for j in 0..n {
                    y += elasticity[i][j] * log_rel[j];
                }
                y += noise.sample(&mut rng);
                rows.push(RawRow {
                    store_code: store_code(s),
                    upc_code: upc_code(i),
                    week_id: week,
                    units_sold: y.exp(),
                    total_price: base_price[i] * log_rel[i].exp(),
                    units_per_deal: 1,
                    pack_size_text: "1L".into(),
                    promo_b: promo[i],
                    promo_s: false,
                    promo_c: false,
                    exclude_flag: false,
                    brand_family: format!("BR{}", i % 2),
                    style_segment: format!("ST{}", i % 3),
                    category_code: "CAT0".into(),
                });
            }
        }
    }
    let truth = GroundTruth {
        upcs: (0..n).map(upc_code).collect(),
        stores: (0..cfg.n_stores).map(store_code).collect(),
        elasticity,
        base_price,
        baseline_demand,
        store_effects,
        config: cfg.clone(),
    };
    Ok((rows, truth))
}
