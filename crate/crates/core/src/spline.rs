//! Truncated-power cubic spline bases on normalized log-prices.
//!
//! Each product carries its own knots (empirical quantiles of its training
//! log-prices), a centering constant and a floored scale. Component `k` of the
//! basis is `ReLU((u - knot_k) / sigma)^3`, and its first two derivatives with
//! respect to the original log-price are available in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to the per-product log-price scale.
pub const SIGMA_FLOOR: f64 = 0.2;

/// Quantile range over which knots are placed.
pub const KNOT_QUANTILE_RANGE: (f64, f64) = (0.05, 0.95);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    #[serde(rename = "K")]
    pub k: usize,
    pub knots: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
}

/// Basis values and their first two derivatives at one log-price.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisTriple {
    pub value: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl BasisTriple {
    pub fn zeros(k: usize) -> Self {
        BasisTriple {
            value: vec![0.0; k],
            d1: vec![0.0; k],
            d2: vec![0.0; k],
        }
    }
}

/// Empirical quantile with linear interpolation between order statistics.
/// `sorted` must be ascending and nonempty.
pub fn empirical_quantile(sorted: &[f64], tau: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * tau.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Quantile levels used for `k` knots: equally spaced over the interior range,
/// or the median when `k == 1`.
pub fn knot_levels(k: usize) -> Vec<f64> {
    let (lo, hi) = KNOT_QUANTILE_RANGE;
    match k {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..k)
            .map(|i| (lo * (k - 1 - i) as f64 + hi * i as f64) / (k - 1) as f64)
            .collect(),
    }
}

impl SplineSpec {
    /// Fits knots, center and scale from one product's training log-prices.
    pub fn fit(train_u: &[f64], k: usize) -> Result<Self> {
        let mut sorted: Vec<f64> = train_u.iter().copied().filter(|v| v.is_finite()).collect();
        if sorted.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "spline fit needs at least 2 finite log-prices, got {}",
                sorted.len()
            )));
        }
        if k == 0 {
            return Err(Error::Config("spline basis count K must be >= 1".into()));
        }
        sorted.sort_by(|a, b| a.total_cmp(b));
        let n = sorted.len() as f64;
        let mu = sorted.iter().sum::<f64>() / n;
        let var = sorted.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0);
        let sigma = var.sqrt().max(SIGMA_FLOOR);
        let knots = knot_levels(k)
            .into_iter()
            .map(|tau| empirical_quantile(&sorted, tau))
            .collect();
        Ok(SplineSpec { k, knots, mu, sigma })
    }

    /// Basis derivative of order `r` (0, 1 or 2) at log-price `u`.
    pub fn eval(&self, u: f64, order: usize) -> Vec<f64> {
        assert!(order <= 2, "basis derivative order must be 0, 1 or 2");
        let factor = match order {
            0 => 1.0,
            1 => 3.0,
            _ => 6.0,
        } / self.sigma.powi(order as i32);
        let power = 3 - order as i32;
        self.knots
            .iter()
            .map(|&knot| {
                let z = ((u - knot) / self.sigma).max(0.0);
                if z == 0.0 {
                    0.0
                } else {
                    factor * z.powi(power)
                }
            })
            .collect()
    }

    /// Value, first and second derivative in one pass.
    pub fn eval_triple(&self, u: f64) -> BasisTriple {
        let s = self.sigma;
        let mut out = BasisTriple::zeros(self.k);
        for (idx, &knot) in self.knots.iter().enumerate() {
            let z = (u - knot) / s;
            if z > 0.0 {
                out.value[idx] = z * z * z;
                out.d1[idx] = 3.0 * z * z / s;
                out.d2[idx] = 6.0 * z / (s * s);
            }
        }
        out
    }

    /// Normalized coordinate `(u - mu) / sigma`.
    pub fn normalize(&self, u: f64) -> f64 {
        (u - self.mu) / self.sigma
    }

    /// Knots expressed in the normalized coordinate.
    pub fn normalized_knots(&self) -> Vec<f64> {
        self.knots.iter().map(|k| self.normalize(*k)).collect()
    }
}
