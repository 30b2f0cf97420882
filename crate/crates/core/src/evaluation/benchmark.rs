//! Directed pairwise log-log OLS benchmark with HC1 robust inference.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::metrics::masked_mae_rmse;
use crate::error::{Error, Result};
use crate::panel::{FeaturePanel, FeatureRow};
use crate::training::data::WeekSplit;

pub const MIN_TRAIN_ROWS: usize = 30;
pub const MIN_DISTINCT_PRICES: usize = 2;
pub const Z_95: f64 = 1.96;

/// Controls of the demand-receiving product.
pub const CONTROL_COLUMNS: [&str; 16] = [
    "on_promo",
    "week_rank",
    "sin_52",
    "cos_52",
    "sin_13",
    "cos_13",
    "weeks_since_first_seen_store_upc",
    "lag_1",
    "lag_4",
    "miss_lag_1",
    "miss_lag_4",
    "promo_intensity_store_week",
    "n_neighbors_sw_cat",
    "neighbor_promo_share_sw_cat",
    "lag1_neighbor_mean",
    "share_new_neighbors_13w",
];

fn controls(r: &FeatureRow) -> [f64; 16] {
    let b = |v: bool| f64::from(u8::from(v));
    [
        b(r.on_promo),
        r.week_rank as f64,
        r.sin_52,
        r.cos_52,
        r.sin_13,
        r.cos_13,
        r.weeks_since_first_seen_store_upc as f64,
        r.lag_1,
        r.lag_4,
        b(r.miss_lag_1),
        b(r.miss_lag_4),
        r.promo_intensity_store_week,
        r.n_neighbors_sw_cat as f64,
        r.neighbor_promo_share_sw_cat,
        r.lag1_neighbor_mean,
        r.share_new_neighbors_13w,
    ]
}

/// One store-week of a directed pair: demand and price of `i`, price of `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRow {
    pub week_id: i64,
    pub y: f64,
    pub u_own: f64,
    pub u_cross: f64,
    pub z: Vec<f64>,
}

/// Directed pair rows keyed by (store, i, j), built from store-weeks where
/// both products are observed.
pub fn pairwise_rows(fp: &FeaturePanel) -> BTreeMap<(String, String, String), Vec<PairRow>> {
    let mut by_sw: BTreeMap<(&str, i64), Vec<&FeatureRow>> = BTreeMap::new();
    for r in &fp.rows {
        by_sw.entry((&r.store_code, r.week_id)).or_default().push(r);
    }
    let mut out: BTreeMap<(String, String, String), Vec<PairRow>> = BTreeMap::new();
    for ((store, week), rows) in by_sw {
        for a in &rows {
            for b in &rows {
                if a.upc_code == b.upc_code {
                    continue;
                }
                let z = controls(a);
                if !(a.y.is_finite() && a.u.is_finite() && b.u.is_finite() && z.iter().all(|v| v.is_finite())) {
                    continue;
                }
                out.entry((store.to_string(), a.upc_code.clone(), b.upc_code.clone()))
                    .or_default()
                    .push(PairRow {
                        week_id: week,
                        y: a.y,
                        u_own: a.u,
                        u_cross: b.u,
                        z: z.to_vec(),
                    });
            }
        }
    }
    out
}

/// Least-squares coefficients, residuals and HC1 covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coef: DVector<f64>,
    pub residuals: DVector<f64>,
    pub cov_hc1: DMatrix<f64>,
}

/// Solves by Householder QR and forms the HC1 sandwich
/// `n/(n-k) (X'X)^-1 X' diag(e^2) X (X'X)^-1`.
pub fn ols_hc1(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, k) = x.shape();
    if n <= k {
        return Err(Error::InsufficientData(format!("{n} rows for {k} columns")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let diag_max = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..k).any(|i| r[(i, i)].abs() <= 1e-10 * diag_max.max(f64::MIN_POSITIVE)) {
        return Err(Error::Domain("design matrix is rank deficient".into()));
    }
    let qty = qr.q().transpose() * y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Domain("triangular solve failed".into()))?;
    let residuals = y - x * &coef;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Domain("triangular inverse failed".into()))?;
    let bread = &r_inv * r_inv.transpose();
    let mut meat = DMatrix::zeros(k, k);
    for (row, e) in x.row_iter().zip(residuals.iter()) {
        meat += row.transpose() * row * (e * e);
    }
    let cov_hc1 = &bread * meat * &bread * (n as f64 / (n - k) as f64);
    Ok(OlsFit { coef, residuals, cov_hc1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SkipReason {
    MissingSplit,
    MinObservations,
    DistinctOwnPrices,
    DistinctCrossPrices,
    RankDeficient,
}

impl SkipReason {
    pub fn label(&self) -> &'static str {
        match self {
            SkipReason::MissingSplit => "missing split",
            SkipReason::MinObservations => "min observations",
            SkipReason::DistinctOwnPrices => "distinct own prices",
            SkipReason::DistinctCrossPrices => "distinct cross prices",
            SkipReason::RankDeficient => "rank deficient",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkFit {
    pub store: String,
    pub i: String,
    pub j: String,
    pub beta0: f64,
    pub beta_own: f64,
    pub beta_cross: f64,
    /// Coefficients of the retained controls, in `controls` order.
    pub gamma: Vec<f64>,
    pub controls: Vec<String>,
    pub se_own: f64,
    pub se_cross: f64,
    pub ci_own: (f64, f64),
    pub ci_cross: (f64, f64),
    pub p_own: f64,
    pub p_cross: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub val_mae: f64,
    pub val_rmse: f64,
    pub val_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub store: String,
    pub i: String,
    pub j: String,
    pub reason: SkipReason,
}

fn distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

fn design(rows: &[PairRow], keep: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    let k = 3 + keep.len();
    let x = DMatrix::from_fn(rows.len(), k, |r, c| match c {
        0 => 1.0,
        1 => rows[r].u_own,
        2 => rows[r].u_cross,
        _ => rows[r].z[keep[c - 3]],
    });
    (x, DVector::from_iterator(rows.len(), rows.iter().map(|r| r.y)))
}

/// Relative tolerance on the R diagonal of the column-normalized design
/// when admitting a control.
const COLLINEAR_TOL: f64 = 1e-8;

fn full_rank(x: &DMatrix<f64>) -> bool {
    let (n, k) = x.shape();
    if n <= k {
        return false;
    }
    let mut xs = x.clone();
    for mut col in xs.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let r = xs.qr().r();
    (0..k).all(|i| r[(i, i)].abs() > COLLINEAR_TOL)
}

fn two_sided_p(t: f64) -> f64 {
    let normal = Normal::standard();
    2.0 * (1.0 - normal.cdf(t.abs()))
}

/// Fits one directed group. Controls constant over the training rows, or
/// collinear with the intercept, prices and earlier controls, are dropped
/// before the fit; `control_names` labels the columns of `z`.
pub fn benchmark_fit(
    key: (&str, &str, &str),
    train: &[PairRow],
    val: &[PairRow],
    control_names: &[&str],
) -> std::result::Result<BenchmarkFit, SkipReason> {
    if train.is_empty() || val.is_empty() {
        return Err(SkipReason::MissingSplit);
    }
    if train.len() < MIN_TRAIN_ROWS {
        return Err(SkipReason::MinObservations);
    }
    if distinct(train.iter().map(|r| r.u_own)) < MIN_DISTINCT_PRICES {
        return Err(SkipReason::DistinctOwnPrices);
    }
    if distinct(train.iter().map(|r| r.u_cross)) < MIN_DISTINCT_PRICES {
        return Err(SkipReason::DistinctCrossPrices);
    }
    let n_z = train[0].z.len();
    let mut keep: Vec<usize> = Vec::new();
    for c in (0..n_z).filter(|&c| distinct(train.iter().map(|r| r.z[c])) > 1) {
        keep.push(c);
        if !full_rank(&design(train, &keep).0) {
            keep.pop();
        }
    }
    let (x, y) = design(train, &keep);
    let fit = ols_hc1(&x, &y).map_err(|_| SkipReason::RankDeficient)?;
    let (xv, yv) = design(val, &keep);
    let pred = &xv * &fit.coef;
    let mask = vec![true; val.len()];
    let (val_mae, val_rmse) = masked_mae_rmse(pred.as_slice(), yv.as_slice(), &mask).map_err(|_| SkipReason::MissingSplit)?;
    let val_r2 = super::metrics::masked_r2(pred.as_slice(), yv.as_slice(), &mask).ok();
    let se = |c: usize| fit.cov_hc1[(c, c)].max(0.0).sqrt();
    let (b_own, b_cross) = (fit.coef[1], fit.coef[2]);
    let (se_own, se_cross) = (se(1), se(2));
    Ok(BenchmarkFit {
        store: key.0.to_string(),
        i: key.1.to_string(),
        j: key.2.to_string(),
        beta0: fit.coef[0],
        beta_own: b_own,
        beta_cross: b_cross,
        gamma: fit.coef.iter().skip(3).copied().collect(),
        controls: keep.iter().map(|&c| control_names.get(c).unwrap_or(&"z").to_string()).collect(),
        se_own,
        se_cross,
        ci_own: (b_own - Z_95 * se_own, b_own + Z_95 * se_own),
        ci_cross: (b_cross - Z_95 * se_cross, b_cross + Z_95 * se_cross),
        p_own: two_sided_p(b_own / se_own),
        p_cross: two_sided_p(b_cross / se_cross),
        n_train: train.len(),
        n_val: val.len(),
        val_mae,
        val_rmse,
        val_r2,
    })
}

/// Fits every directed (store, i, j) group of a feature panel on a split.
pub fn run_benchmark(fp: &FeaturePanel, split: WeekSplit) -> (Vec<BenchmarkFit>, Vec<Skipped>) {
    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    let in_range = |w: i64, (lo, hi): (i64, i64)| w >= lo && w <= hi;
    for ((store, i, j), rows) in pairwise_rows(fp) {
        let train: Vec<PairRow> = rows.iter().filter(|r| in_range(r.week_id, split.train)).cloned().collect();
        let val: Vec<PairRow> = rows.iter().filter(|r| in_range(r.week_id, split.val)).cloned().collect();
        match benchmark_fit((&store, &i, &j), &train, &val, &CONTROL_COLUMNS) {
            Ok(f) => fits.push(f),
            Err(reason) => {
                log::debug!("benchmark {store}/{i}/{j} skipped: {}", reason.label());
                skipped.push(Skipped { store, i, j, reason });
            }
        }
    }
    (fits, skipped)
}

/// Writes fits as CSV with flattened intervals.
pub fn write_benchmark_csv<W: std::io::Write>(fits: &[BenchmarkFit], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "store", "i", "j", "beta0", "beta_own", "beta_cross", "se_own", "se_cross", "ci_own_lo", "ci_own_hi",
        "ci_cross_lo", "ci_cross_hi", "p_own", "p_cross", "n_train", "n_val", "val_mae", "val_rmse", "val_r2",
        "controls",
    ])?;
    for f in fits {
        w.write_record([
            f.store.clone(),
            f.i.clone(),
            f.j.clone(),
            f.beta0.to_string(),
            f.beta_own.to_string(),
            f.beta_cross.to_string(),
            f.se_own.to_string(),
            f.se_cross.to_string(),
            f.ci_own.0.to_string(),
            f.ci_own.1.to_string(),
            f.ci_cross.0.to_string(),
            f.ci_cross.1.to_string(),
            f.p_own.to_string(),
            f.p_cross.to_string(),
            f.n_train.to_string(),
            f.n_val.to_string(),
            f.val_mae.to_string(),
            f.val_rmse.to_string(),
            f.val_r2.map(|v| v.to_string()).unwrap_or_default(),
            f.controls.join(";"),
        ])?;
    }
    w.flush().map_err(|e| Error::io("benchmark csv", e))?;
    Ok(())
}
