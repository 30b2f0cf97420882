//! Masked fit metrics over observed log-demand entries.

use crate::error::{Error, Result};
use crate::panel::wide::WideInstance;

fn observed<'a>(y_hat: &'a [f64], y: &'a [f64], m: &'a [bool]) -> impl Iterator<Item = (f64, f64)> + 'a {
    y_hat.iter().zip(y).zip(m).filter(|(_, m)| **m).map(|((p, t), _)| (*p, *t))
}

/// `1 - SSE / SST` with both sums taken over observed entries only.
pub fn masked_r2(y_hat: &[f64], y: &[f64], m: &[bool]) -> Result<f64> {
    let n = m.iter().filter(|v| **v).count();
    if n < 2 {
        return Err(Error::UndefinedMetric(format!("R² needs two observed entries, got {n}")));
    }
    let mean = observed(y_hat, y, m).map(|(_, t)| t).sum::<f64>() / n as f64;
    let sst: f64 = observed(y_hat, y, m).map(|(_, t)| (t - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::UndefinedMetric("observed targets have zero variance".into()));
    }
    let sse: f64 = observed(y_hat, y, m).map(|(p, t)| (t - p).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

/// Mean absolute and root mean squared residual over observed entries.
pub fn masked_mae_rmse(y_hat: &[f64], y: &[f64], m: &[bool]) -> Result<(f64, f64)> {
    let n = m.iter().filter(|v| **v).count();
    if n == 0 {
        return Err(Error::UndefinedMetric("no observed entries".into()));
    }
    let (abs, sq) = observed(y_hat, y, m).fold((0.0, 0.0), |(a, s), (p, t)| (a + (t - p).abs(), s + (t - p).powi(2)));
    Ok((abs / n as f64, (sq / n as f64).sqrt()))
}

/// Flattens per-instance predictions, targets and masks.
pub fn flatten_split(preds: &[Vec<f64>], split: &[WideInstance]) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let y_hat = preds.iter().flatten().copied().collect();
    let y = split.iter().flat_map(|w| w.y.iter().copied()).collect();
    let m = split.iter().flat_map(|w| w.m.iter().copied()).collect();
    (y_hat, y, m)
}

/// Fit metrics of one split.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitMetrics {
    pub r2: f64,
    pub mae: f64,
    pub rmse: f64,
    pub n_obs: usize,
}

pub fn split_metrics(preds: &[Vec<f64>], split: &[WideInstance]) -> Result<FitMetrics> {
    let (y_hat, y, m) = flatten_split(preds, split);
    let (mae, rmse) = masked_mae_rmse(&y_hat, &y, &m)?;
    Ok(FitMetrics {
        r2: masked_r2(&y_hat, &y, &m)?,
        mae,
        rmse,
        n_obs: m.iter().filter(|v| **v).count(),
    })
}
