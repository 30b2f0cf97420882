//! Within-UPC log-price outlier removal (IQR fences).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::filters::FilterConfig;
use super::units::PanelRow;
use crate::spline::empirical_quantile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpcOutlierStats {
    pub rows: usize,
    pub removed: usize,
    pub q1: f64,
    pub q3: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub per_upc: BTreeMap<String, UpcOutlierStats>,
    /// UPCs with fewer than four rows, left untouched.
    pub skipped: Vec<String>,
    pub total_removed: usize,
}

pub const MIN_ROWS_FOR_IQR: usize = 4;

pub fn remove_price_outliers(panel: &[PanelRow], cfg: &FilterConfig) -> (Vec<PanelRow>, OutlierReport) {
    let mut by_upc: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in panel {
        by_upc.entry(&r.upc_code).or_default().push(r.u);
    }
    let mut report = OutlierReport::default();
    let mut fences: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for (upc, mut us) in by_upc {
        if us.len() < MIN_ROWS_FOR_IQR {
            report.skipped.push(upc.to_string());
            continue;
        }
        us.sort_by(|a, b| a.total_cmp(b));
        let q1 = empirical_quantile(&us, 0.25);
        let q3 = empirical_quantile(&us, 0.75);
        let iqr = q3 - q1;
        let lo = q1 - cfg.iqr_multiplier * iqr;
        let hi = q3 + cfg.iqr_multiplier * iqr;
        let removed = us.iter().filter(|u| **u < lo || **u > hi).count();
        report.total_removed += removed;
        report.per_upc.insert(
            upc.to_string(),
            UpcOutlierStats {
                rows: us.len(),
                removed,
                q1,
                q3,
                lower_fence: lo,
                upper_fence: hi,
            },
        );
        fences.insert(upc, (lo, hi));
    }
    let out = panel
        .iter()
        .filter(|r| match fences.get(r.upc_code.as_str()) {
            Some((lo, hi)) => r.u >= *lo && r.u <= *hi,
            None => true,
        })
        .cloned()
        .collect();
    (out, report)
}
