//! Composite objective: masked Huber fit, own-curvature penalty and
//! elasticity-band penalty, with their gradients with respect to the
//! surface outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Surface, SurfacePoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub huber_delta: f64,
    pub lambda_smooth: f64,
    pub lambda_elast: f64,
    pub own_band: (f64, f64),
    pub cross_band: (f64, f64),
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            huber_delta: 1.0,
            lambda_smooth: 3.514e-2,
            lambda_elast: 4.450e-2,
            own_band: (-5.0, 0.0),
            cross_band: (-1.0, 1.0),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.huber_delta > 0.0) {
            return Err(Error::Config("huber_delta must be positive".into()));
        }
        if !(self.own_band.0 < self.own_band.1 && self.cross_band.0 < self.cross_band.1) {
            return Err(Error::Config("band lower edges must lie below upper edges".into()));
        }
        if !(self.lambda_smooth >= 0.0 && self.lambda_elast >= 0.0) {
            return Err(Error::Config("penalty weights must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub fit: f64,
    pub smooth: f64,
    pub band: f64,
    pub total: f64,
    pub n_m: usize,
    pub n_e: usize,
}

impl LossBreakdown {
    pub fn compose(fit: f64, smooth: f64, band: f64, n_m: usize, n_e: usize, cfg: &LossConfig) -> LossBreakdown {
        LossBreakdown {
            fit,
            smooth,
            band,
            total: fit + cfg.lambda_smooth * smooth + cfg.lambda_elast * band,
            n_m,
            n_e,
        }
    }

    /// Mean of per-instance breakdowns; counts are summed.
    pub fn mean(parts: &[LossBreakdown], cfg: &LossConfig) -> LossBreakdown {
        if parts.is_empty() {
            return LossBreakdown::default();
        }
        let k = parts.len() as f64;
        let avg = |f: fn(&LossBreakdown) -> f64| parts.iter().map(f).sum::<f64>() / k;
        LossBreakdown::compose(
            avg(|p| p.fit),
            avg(|p| p.smooth),
            avg(|p| p.band),
            parts.iter().map(|p| p.n_m).sum(),
            parts.iter().map(|p| p.n_e).sum(),
            cfg,
        )
    }
}

pub fn huber(r: f64, delta: f64) -> f64 {
    if r.abs() <= delta {
        0.5 * r * r
    } else {
        delta * (r.abs() - 0.5 * delta)
    }
}

pub fn huber_grad(r: f64, delta: f64) -> f64 {
    r.clamp(-delta, delta)
}

fn observed_count(m: &[bool]) -> usize {
    m.iter().filter(|v| **v).count()
}

/// Masked mean Huber loss; `None` when nothing is observed.
pub fn loss_fit(y_hat: &[f64], y: &[f64], m: &[bool], delta: f64) -> Option<f64> {
    let n_m = observed_count(m);
    (n_m > 0).then(|| {
        (0..y.len())
            .filter(|&i| m[i])
            .map(|i| huber(y_hat[i] - y[i], delta))
            .sum::<f64>()
            / n_m as f64
    })
}

/// Masked mean squared curvature; `None` when nothing is observed.
pub fn loss_smooth(kappa: &[f64], m: &[bool]) -> Option<f64> {
    let n_m = observed_count(m);
    (n_m > 0).then(|| (0..kappa.len()).filter(|&i| m[i]).map(|i| kappa[i] * kappa[i]).sum::<f64>() / n_m as f64)
}

/// `max(0, e - hi)^2 + max(0, lo - e)^2`.
pub fn band_penalty(e: f64, band: (f64, f64)) -> f64 {
    (e - band.1).max(0.0).powi(2) + (band.0 - e).max(0.0).powi(2)
}

pub fn band_penalty_grad(e: f64, band: (f64, f64)) -> f64 {
    2.0 * (e - band.1).max(0.0) - 2.0 * (band.0 - e).max(0.0)
}

/// Mean band penalty over own and cross elasticities; 0 when both are empty.
pub fn loss_band(own: &[f64], cross: &[f64], cfg: &LossConfig) -> f64 {
    let n_e = own.len() + cross.len();
    if n_e == 0 {
        return 0.0;
    }
    (own.iter().map(|e| band_penalty(*e, cfg.own_band)).sum::<f64>()
        + cross.iter().map(|e| band_penalty(*e, cfg.cross_band)).sum::<f64>())
        / n_e as f64
}

/// Gradient of one instance's loss with respect to predictions, curvatures
/// and elasticities (own per product, cross per graph edge).
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrad {
    pub y_hat: Vec<f64>,
    pub curvature: Vec<f64>,
    pub own: Vec<f64>,
    pub cross: Vec<Vec<f64>>,
}

/// Loss of one instance and its surface-output gradient scaled by `scale`.
/// Returns `None` for instances with no observed product.
pub fn instance_loss(
    surface: &Surface,
    point: &SurfacePoint,
    y: &[f64],
    m: &[bool],
    cfg: &LossConfig,
    scale: f64,
) -> Option<(LossBreakdown, SurfaceGrad)> {
    let n = surface.n();
    let n_m = observed_count(m);
    if n_m == 0 {
        return None;
    }
    let kappa: Vec<f64> = (0..n).map(|i| surface.curvature(point, i)).collect();
    let fit = loss_fit(&point.y_hat, y, m, cfg.huber_delta)?;
    let smooth = loss_smooth(&kappa, m)?;

    let mut own_vals = Vec::new();
    let mut cross_vals = Vec::new();
    let own_e: Vec<f64> = (0..n).map(|i| surface.elasticity_own(point, i)).collect();
    for i in (0..n).filter(|&i| m[i]) {
        own_vals.push(own_e[i]);
        for e in &surface.edges[i] {
            if m[e.j] {
                cross_vals.push(surface.elasticity_cross(point, i, e.j).unwrap_or(0.0));
            }
        }
    }
    let n_e = own_vals.len() + cross_vals.len();
    let band = loss_band(&own_vals, &cross_vals, cfg);

    let inv_m = scale / n_m as f64;
    let inv_e = if n_e > 0 { scale * cfg.lambda_elast / n_e as f64 } else { 0.0 };
    let mut grad = SurfaceGrad {
        y_hat: vec![0.0; n],
        curvature: vec![0.0; n],
        own: vec![0.0; n],
        cross: surface.edges.iter().map(|es| vec![0.0; es.len()]).collect(),
    };
    for i in (0..n).filter(|&i| m[i]) {
        grad.y_hat[i] = inv_m * huber_grad(point.y_hat[i] - y[i], cfg.huber_delta);
        grad.curvature[i] = inv_m * cfg.lambda_smooth * 2.0 * kappa[i];
        grad.own[i] = inv_e * band_penalty_grad(own_e[i], cfg.own_band);
        for (slot, e) in surface.edges[i].iter().enumerate() {
            if m[e.j] {
                let ce = surface.elasticity_cross(point, i, e.j).unwrap_or(0.0);
                grad.cross[i][slot] = inv_e * band_penalty_grad(ce, cfg.cross_band);
            }
        }
    }
    if n_e == 0 {
        log::debug!("instance without band-eligible elasticities");
    }
    Some((LossBreakdown::compose(fit, smooth, band, n_m, n_e, cfg), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::surface::testutil::random_surface;
    use crate::rng::substream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn huber_branches() {
        assert_eq!(loss_fit(&[1.0, 2.0], &[1.0, 2.0], &[true, true], 1.0), Some(0.0));
        assert_abs_diff_eq!(loss_fit(&[0.5], &[0.0], &[true], 1.0).unwrap(), 0.125);
        assert_abs_diff_eq!(loss_fit(&[3.0], &[0.0], &[true], 1.0).unwrap(), 2.5);
        assert_eq!(loss_fit(&[3.0], &[0.0], &[false], 1.0), None);
    }

    #[test]
    fn smooth_cases() {
        assert_abs_diff_eq!(loss_smooth(&[2.0, -2.0], &[true, true]).unwrap(), 4.0);
        assert_abs_diff_eq!(loss_smooth(&[2.0, -3.0], &[true, false]).unwrap(), 4.0);
        assert_eq!(loss_smooth(&[0.0, 0.0], &[true, true]), Some(0.0));
    }

    #[test]
    fn band_cases() {
        let cfg = LossConfig::default();
        assert_eq!(loss_band(&[-1.0, -4.9], &[0.3], &cfg), 0.0);
        assert_abs_diff_eq!(loss_band(&[0.5], &[], &cfg), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(loss_band(&[], &[-1.3], &cfg), 0.09, epsilon = 1e-12);
        assert_eq!(loss_band(&[], &[], &cfg), 0.0);
    }

    #[test]
    fn breakdown_reconstructs_total() {
        let cfg = LossConfig::default();
        let b = LossBreakdown::compose(0.3, 1.7, 0.2, 3, 5, &cfg);
        assert_eq!(b.total, b.fit + cfg.lambda_smooth * b.smooth + cfg.lambda_elast * b.band);
    }

    #[test]
    fn unobserved_products_do_not_change_losses() {
        let mut rng = substream(8, "test");
        let s = random_surface(3, 2, &mut rng);
        let u = [0.1, 0.4, -0.3];
        let pt = s.point(&u);
        let cfg = LossConfig::default();
        let y = [0.0, 1.0, 2.0];
        let (a, _) = instance_loss(&s, &pt, &y, &[true, true, false], &cfg, 1.0).unwrap();
        let y2 = [0.0, 1.0, 99.0];
        let (b, _) = instance_loss(&s, &pt, &y2, &[true, true, false], &cfg, 1.0).unwrap();
        assert_eq!(a, b);
        assert!(instance_loss(&s, &pt, &y, &[false; 3], &cfg, 1.0).is_none());
    }
}
