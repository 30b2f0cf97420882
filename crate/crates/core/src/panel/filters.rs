//! Identification-oriented store and series filters.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::units::PanelRow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_price: f64,
    pub min_store_weeks: usize,
    pub min_series_weeks: usize,
    pub min_coverage: f64,
    pub min_distinct_prices: usize,
    pub min_price_changes: usize,
    pub min_logprice_range: f64,
    pub max_promo_corr: f64,
    pub max_promo_switch_share: f64,
    pub iqr_multiplier: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_price: 0.05,
            min_store_weeks: 150,
            min_series_weeks: 52,
            min_coverage: 0.75,
            min_distinct_prices: 3,
            min_price_changes: 5,
            min_logprice_range: 0.15,
            max_promo_corr: 0.80,
            max_promo_switch_share: 0.80,
            iqr_multiplier: 1.5,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            self.min_price,
            self.min_coverage,
            self.min_logprice_range,
            self.max_promo_corr,
            self.max_promo_switch_share,
            self.iqr_multiplier,
        ];
        if nonneg.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("filter thresholds must be nonnegative".into()));
        }
        if self.min_coverage > 1.0 {
            return Err(Error::Config("min_coverage must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Why a store-UPC series was removed. Rules are checked in declaration order
/// and a series is attributed to the first rule it fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterRule {
    MinWeeks,
    Coverage,
    DistinctPrices,
    PriceChanges,
    LogPriceRange,
    PromoCorrelation,
    PromoSwitchShare,
}

impl FilterRule {
    pub const ALL: [FilterRule; 7] = [
        FilterRule::MinWeeks,
        FilterRule::Coverage,
        FilterRule::DistinctPrices,
        FilterRule::PriceChanges,
        FilterRule::LogPriceRange,
        FilterRule::PromoCorrelation,
        FilterRule::PromoSwitchShare,
    ];

    pub fn reason(self) -> &'static str {
        match self {
            FilterRule::MinWeeks => "min weeks",
            FilterRule::Coverage => "coverage",
            FilterRule::DistinctPrices => "distinct prices",
            FilterRule::PriceChanges => "price changes",
            FilterRule::LogPriceRange => "log-price range",
            FilterRule::PromoCorrelation => "promo correlation",
            FilterRule::PromoSwitchShare => "promo switch share",
        }
    }
}

/// Per-series identification statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesDiagnostics {
    pub observed_weeks: usize,
    pub coverage: f64,
    pub distinct_prices: usize,
    pub price_changes: usize,
    pub logprice_range: f64,
    pub promo_corr: f64,
    pub promo_switch_share: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input_rows: usize,
    pub stores_removed: Vec<String>,
    pub rows_removed_by_store_filter: usize,
    pub series_considered: usize,
    pub series_removed: BTreeMap<FilterRule, usize>,
    pub rows_removed: BTreeMap<FilterRule, usize>,
    pub series_retained: usize,
    pub rows_retained: usize,
    pub empty_result: bool,
}

const PRICE_EQ_RTOL: f64 = 1e-12;

fn same_price(a: f64, b: f64) -> bool {
    (a - b).abs() <= PRICE_EQ_RTOL * a.abs().max(b.abs())
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        // undefined when either side is constant; treated as no association
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Statistics for one series; `rows` must be sorted by week.
pub fn series_diagnostics(rows: &[&PanelRow]) -> SeriesDiagnostics {
    let n = rows.len();
    let first = rows.first().map(|r| r.week_id).unwrap_or(0);
    let last = rows.last().map(|r| r.week_id).unwrap_or(0);
    let span = (last - first + 1).max(1) as f64;

    let mut prices: Vec<f64> = rows.iter().map(|r| r.p_l).collect();
    prices.sort_by(|a, b| a.total_cmp(b));
    prices.dedup_by(|a, b| same_price(*a, *b));

    let mut changes = 0usize;
    let mut switches = 0usize;
    for pair in rows.windows(2) {
        if !same_price(pair[0].p_l, pair[1].p_l) {
            changes += 1;
            if pair[0].on_promo != pair[1].on_promo {
                switches += 1;
            }
        }
    }
    let us: Vec<f64> = rows.iter().map(|r| r.u).collect();
    let promo: Vec<f64> = rows.iter().map(|r| if r.on_promo { 1.0 } else { 0.0 }).collect();
    let (umin, umax) = us
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    SeriesDiagnostics {
        observed_weeks: n,
        coverage: n as f64 / span,
        distinct_prices: prices.len(),
        price_changes: changes,
        logprice_range: if n > 0 { umax - umin } else { 0.0 },
        promo_corr: if n > 1 { pearson(&us, &promo) } else { 0.0 },
        promo_switch_share: if changes > 0 {
            switches as f64 / changes as f64
        } else {
            0.0
        },
    }
}

/// First rule a series fails, if any.
pub fn failing_rule(d: &SeriesDiagnostics, cfg: &FilterConfig) -> Option<FilterRule> {
    if d.observed_weeks < cfg.min_series_weeks {
        Some(FilterRule::MinWeeks)
    } else if d.coverage < cfg.min_coverage {
        Some(FilterRule::Coverage)
    } else if d.distinct_prices < cfg.min_distinct_prices {
        Some(FilterRule::DistinctPrices)
    } else if d.price_changes < cfg.min_price_changes {
        Some(FilterRule::PriceChanges)
    } else if d.logprice_range < cfg.min_logprice_range {
        Some(FilterRule::LogPriceRange)
    } else if d.promo_corr.abs() > cfg.max_promo_corr {
        Some(FilterRule::PromoCorrelation)
    } else if d.promo_switch_share > cfg.max_promo_switch_share {
        Some(FilterRule::PromoSwitchShare)
    } else {
        None
    }
}

/// Groups row indices by (store, upc), each group sorted by week.
pub(crate) fn series_index(panel: &[PanelRow]) -> BTreeMap<(String, String), Vec<usize>> {
    let mut groups: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for (idx, r) in panel.iter().enumerate() {
        groups
            .entry((r.store_code.clone(), r.upc_code.clone()))
            .or_default()
            .push(idx);
    }
    for idxs in groups.values_mut() {
        idxs.sort_by_key(|&i| panel[i].week_id);
    }
    groups
}

/// Removes thin stores, then every store-UPC series failing an identification
/// rule. Output rows keep their input order.
pub fn apply_filters(panel: &[PanelRow], cfg: &FilterConfig) -> Result<(Vec<PanelRow>, FilterReport)> {
    cfg.validate()?;
    let mut report = FilterReport {
        input_rows: panel.len(),
        ..Default::default()
    };
    for rule in FilterRule::ALL {
        report.series_removed.insert(rule, 0);
        report.rows_removed.insert(rule, 0);
    }

    let mut store_weeks: BTreeMap<&str, BTreeSet<i64>> = BTreeMap::new();
    for r in panel {
        store_weeks.entry(&r.store_code).or_default().insert(r.week_id);
    }
    let dropped_stores: BTreeSet<&str> = store_weeks
        .iter()
        .filter(|(_, weeks)| weeks.len() < cfg.min_store_weeks)
        .map(|(s, _)| *s)
        .collect();
    report.stores_removed = dropped_stores.iter().map(|s| s.to_string()).collect();

    let mut keep = vec![false; panel.len()];
    for ((store, _), idxs) in series_index(panel) {
        if dropped_stores.contains(store.as_str()) {
            report.rows_removed_by_store_filter += idxs.len();
            continue;
        }
        report.series_considered += 1;
        let rows: Vec<&PanelRow> = idxs.iter().map(|&i| &panel[i]).collect();
        match failing_rule(&series_diagnostics(&rows), cfg) {
            Some(rule) => {
                *report.series_removed.get_mut(&rule).unwrap() += 1;
                *report.rows_removed.get_mut(&rule).unwrap() += idxs.len();
            }
            None => {
                report.series_retained += 1;
                for i in idxs {
                    keep[i] = true;
                }
            }
        }
    }
    let out: Vec<PanelRow> = panel
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(r, _)| r.clone())
        .collect();
    report.rows_retained = out.len();
    report.empty_result = out.is_empty();
    if report.empty_result {
        log::warn!("identification filters removed every series");
    }
    Ok((out, report))
}
