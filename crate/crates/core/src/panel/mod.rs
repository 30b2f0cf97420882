//! Weekly retail panels: ingestion, unit normalization, identification
//! filters, calendar completion, feature engineering and wide assembly.

pub mod calendar;
pub mod features;
pub mod filters;
pub mod outliers;
pub mod raw;
pub mod synth;
pub mod units;
pub mod wide;

use serde::{Deserialize, Serialize};

pub use calendar::{complete_calendar, CalendarPanel, CalendarReport, GridRow};
pub use features::{engineer_features, FeaturePanel, FeatureRow};
pub use filters::{apply_filters, FilterConfig, FilterReport, FilterRule};
pub use outliers::{remove_price_outliers, OutlierReport};
pub use raw::{load_panel, read_panel, RawRow};
pub use synth::{generate_synthetic_panel, GroundTruth, SynthConfig};
pub use units::{normalize_units, parse_pack_size, NormalizeReport, PanelRow};
pub use wide::{assemble_wide, ProductMeta, Universe, WideInstance};

use crate::error::Result;

/// Every report produced while cleaning a raw panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub normalize: NormalizeReport,
    pub filters: FilterReport,
    pub outliers: OutlierReport,
    pub calendar: CalendarReport,
}

/// Runs normalization, filters, outlier removal and calendar completion.
pub fn clean_panel(rows: &[RawRow], cfg: &FilterConfig) -> Result<(Vec<PanelRow>, CalendarPanel, PreprocessReport)> {
    let (normalized, normalize) = normalize_units(rows, cfg.min_price)?;
    let (filtered, filters) = apply_filters(&normalized, cfg)?;
    let (cleaned, outliers) = remove_price_outliers(&filtered, cfg);
    let calendar = complete_calendar(&cleaned);
    let report = PreprocessReport {
        normalize,
        filters,
        outliers,
        calendar: calendar.report.clone(),
    };
    Ok((calendar.observed_rows(), calendar, report))
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::units::PanelRow;

    /// A single store-UPC series of one-liter units, ten sold per week, with
    /// per-week (price per liter, promo flag) from `f`.
    pub fn series(
        store: &str,
        upc: &str,
        weeks: impl IntoIterator<Item = i64>,
        f: impl Fn(i64) -> (f64, bool),
    ) -> Vec<PanelRow> {
        weeks
            .into_iter()
            .map(|w| {
                let (p_l, promo) = f(w);
                PanelRow {
                    store_code: store.into(),
                    upc_code: upc.into(),
                    week_id: w,
                    units_sold: 10.0,
                    total_price: p_l,
                    units_per_deal: 1,
                    pack_size_text: "1L".into(),
                    promo_b: promo,
                    promo_s: false,
                    promo_c: false,
                    exclude_flag: false,
                    brand_family: "B".into(),
                    style_segment: "S".into(),
                    category_code: "C".into(),
                    liters_per_upc: 1.0,
                    q_l: 10.0,
                    p_l,
                    u: p_l.ln(),
                    y: 10f64.ln(),
                    on_promo: promo,
                }
            })
            .collect()
    }
}
