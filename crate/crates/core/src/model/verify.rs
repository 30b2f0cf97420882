//! Numerical self-checks of a trained surface: closure of the elasticity
//! rows, analytic against finite-difference elasticities, and agreement of
//! demand reconstructed along two paths.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DemandModel;
use crate::error::{Error, Result};
use crate::field::{closure_residual, path_independence_gap};
use crate::panel::wide::{WideInstance, TOKEN_COLUMNS};
use crate::rng::substream;

/// Step of the log-demand central differences compared with elasticities.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub points: usize,
    pub contexts: usize,
    pub closure_step: f64,
    pub max_closure_residual: f64,
    pub mean_closure_residual: f64,
    pub max_own_fd_abs_delta: f64,
    pub max_own_fd_rel_delta: f64,
    pub max_cross_fd_abs_delta: f64,
    pub max_cross_fd_rel_delta: f64,
    pub max_path_gap: f64,
}

impl DemandModel {
    /// A single all-observed store-week at standardized-zero tokens, the
    /// spline centres and unseen categorical ids.
    pub fn neutral_instance(&self) -> WideInstance {
        let n = self.n();
        let d = TOKEN_COLUMNS.len();
        let observed = TOKEN_COLUMNS.iter().position(|(name, _)| *name == "observed").expect("observed column");
        let mut tokens = Array2::zeros((n, d));
        for mut row in tokens.rows_mut() {
            for c in 0..d {
                row[c] = self.scaler.mean[c];
            }
            row[observed] = 1.0;
        }
        WideInstance {
            store_code: String::new(),
            week_id: 0,
            u: self.splines.iter().map(|s| s.mu).collect(),
            m: vec![true; n],
            y: vec![0.0; n],
            tokens,
            cats: vec![[0; crate::panel::wide::N_CATEGORICAL]; n],
        }
    }
}

fn rel(delta: f64, scale: f64) -> f64 {
    delta / scale.abs().max(1e-8)
}

/// Checks `points` random interior log-price vectors spread over the given
/// contexts (the neutral context when `contexts` is empty), on the frozen
/// graph.
pub fn verify_model(
    model: &DemandModel,
    contexts: &[WideInstance],
    points: usize,
    closure_step: f64,
    seed: u64,
) -> Result<VerifyReport> {
    if points == 0 {
        return Err(Error::Config("at least one verification point is required".into()));
    }
    let graph = model.frozen()?;
    let neutral = [model.neutral_instance()];
    let ctx: &[WideInstance] = if contexts.is_empty() { &neutral } else { contexts };
    let surfaces = model.surfaces(ctx, graph)?;
    let n = model.n();
    let mut rng = substream(seed, "verify");
    let mut report = VerifyReport {
        points,
        contexts: ctx.len(),
        closure_step,
        max_closure_residual: 0.0,
        mean_closure_residual: 0.0,
        max_own_fd_abs_delta: 0.0,
        max_own_fd_rel_delta: 0.0,
        max_cross_fd_abs_delta: 0.0,
        max_cross_fd_rel_delta: 0.0,
        max_path_gap: 0.0,
    };
    let interior = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        model
            .splines
            .iter()
            .map(|s| {
                let lo = s.knots.first().copied().unwrap_or(s.mu) - 0.5 * s.sigma;
                let hi = s.knots.last().copied().unwrap_or(s.mu) + 0.5 * s.sigma;
                rng.random_range(lo..=hi)
            })
            .collect()
    };
    let mut closure_sum = 0.0;
    for p in 0..points {
        let (surf, _) = &surfaces[p % surfaces.len()];
        let u = interior(&mut rng);
        let pt = surf.point(&u);
        for i in 0..n {
            let c = closure_residual(surf, &u, i, closure_step)?;
            report.max_closure_residual = report.max_closure_residual.max(c);
            closure_sum += c;
        }
        for j in 0..n {
            let mut up = u.clone();
            up[j] += FD_STEP;
            let mut dn = u.clone();
            dn[j] -= FD_STEP;
            let (yu, yd) = (surf.point(&up).y_hat, surf.point(&dn).y_hat);
            for i in 0..n {
                let fd = (yu[i] - yd[i]) / (2.0 * FD_STEP);
                if i == j {
                    let d = (surf.elasticity_own(&pt, i) - fd).abs();
                    report.max_own_fd_abs_delta = report.max_own_fd_abs_delta.max(d);
                    report.max_own_fd_rel_delta = report.max_own_fd_rel_delta.max(rel(d, fd));
                } else {
                    let an = surf.elasticity_cross(&pt, i, j).unwrap_or(0.0);
                    let d = (an - fd).abs();
                    report.max_cross_fd_abs_delta = report.max_cross_fd_abs_delta.max(d);
                    report.max_cross_fd_rel_delta = report.max_cross_fd_rel_delta.max(rel(d, fd));
                }
            }
        }
        let target = interior(&mut rng);
        for i in 0..n {
            let gap = path_independence_gap(surf, i, &u, &target, 1.0)?;
            report.max_path_gap = report.max_path_gap.max(gap);
        }
    }
    report.mean_closure_residual = closure_sum / (points * n) as f64;
    Ok(report)
}
