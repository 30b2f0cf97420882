//! Elasticity plausibility scores, robust aggregation over evaluations and
//! trial selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OWN_RANGE: (f64, f64) = (-5.0, 0.0);
pub const CROSS_RANGE: (f64, f64) = (-1.0, 1.0);
/// Distance from the prior median tolerated without penalty.
pub const PRIOR_TOLERANCE: f64 = 0.3;
pub const OWN_WEIGHT: f64 = 0.7;
/// Multiplier of the sample standard deviation in the robust aggregate.
pub const DISPERSION_PENALTY: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticityScore {
    pub p_own: f64,
    pub p_prior: f64,
    pub s_own: f64,
    pub s_cross: f64,
    pub s_elast: f64,
}

fn share_in(values: &[f64], (lo, hi): (f64, f64)) -> f64 {
    values.iter().filter(|v| (lo..=hi).contains(*v)).count() as f64 / values.len() as f64
}

/// Median with the midpoint convention for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 0 { 0.5 * (v[mid - 1] + v[mid]) } else { v[mid] })
}

/// Scores a set of own and cross elasticities against the plausibility
/// ranges and the pooled prior.
pub fn elasticity_score(own: &[f64], cross: &[f64], beta_prior: f64) -> Result<ElasticityScore> {
    let med = median(own).ok_or_else(|| Error::UndefinedMetric("no own-price elasticities to score".into()))?;
    if beta_prior == 0.0 {
        return Err(Error::Domain("the prior elasticity must be nonzero".into()));
    }
    let p_own = share_in(own, OWN_RANGE);
    let p_prior = (((med - beta_prior).abs() - PRIOR_TOLERANCE).max(0.0) / beta_prior.abs()).min(1.0);
    let s_own = p_own * (1.0 - p_prior);
    let s_cross = if cross.is_empty() { 1.0 } else { share_in(cross, CROSS_RANGE) };
    Ok(ElasticityScore {
        p_own,
        p_prior,
        s_own,
        s_cross,
        s_elast: OWN_WEIGHT * s_own + (1.0 - OWN_WEIGHT) * s_cross,
    })
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in values {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

pub fn mean(values: &[f64]) -> f64 {
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// Sample standard deviation with an `n - 1` denominator; zero for fewer
/// than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (compensated_sum(values.iter().map(|v| (v - m).powi(2))) / (values.len() - 1) as f64).sqrt()
}

/// `mean - 0.25 * sd` over fold-seed evaluations.
pub fn robust_aggregate(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::UndefinedMetric("robust aggregate of no values".into()));
    }
    Ok(mean(values) - DISPERSION_PENALTY * sample_sd(values))
}

/// One fold-seed evaluation of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fold: usize,
    pub seed: u64,
    pub r2: f64,
    pub s_elast: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub evaluations: Vec<Evaluation>,
    pub r2_robust: f64,
    pub s_elast_robust: f64,
    pub s_select: f64,
}

impl TrialSummary {
    pub fn new(trial: usize, evaluations: Vec<Evaluation>) -> Result<TrialSummary> {
        let r2: Vec<f64> = evaluations.iter().map(|e| e.r2).collect();
        let se: Vec<f64> = evaluations.iter().map(|e| e.s_elast).collect();
        let r2_robust = robust_aggregate(&r2)?;
        let s_elast_robust = robust_aggregate(&se)?;
        Ok(TrialSummary {
            trial,
            evaluations,
            r2_robust,
            s_elast_robust,
            s_select: r2_robust + s_elast_robust,
        })
    }
}

/// Trial id maximizing the selection score; ties go to the lowest id.
pub fn select_trial(trials: &[TrialSummary]) -> Result<usize> {
    let mut best: Option<&TrialSummary> = None;
    for t in trials {
        let better = match best {
            None => true,
            Some(b) => t.s_select > b.s_select || (t.s_select == b.s_select && t.trial < b.trial),
        };
        if better {
            best = Some(t);
        }
    }
    best.map(|t| t.trial)
        .ok_or_else(|| Error::InsufficientData("no completed trials to select from".into()))
}
