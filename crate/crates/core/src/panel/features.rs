//! Temporal, lifecycle and competitive-neighborhood features.
//!
//! Features are computed on the completed weekly grid and projected back onto
//! observed rows. Lags and rolling means only look at weeks strictly before
//! the current one; anything undefined is stored as 0 with its `miss_*` flag
//! set.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::calendar::CalendarPanel;
use crate::error::{Error, Result};

pub const FOURIER_PERIODS: [f64; 3] = [52.0, 26.0, 13.0];
pub const NEW_NEIGHBOR_WEEKS: i64 = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub store_code: String,
    pub upc_code: String,
    pub week_id: i64,
    pub brand_family: String,
    pub style_segment: String,
    pub category_code: String,
    pub liters_per_upc: f64,
    pub u: f64,
    pub y: f64,
    pub on_promo: bool,
    pub week_rank: i64,
    pub sin_52: f64,
    pub cos_52: f64,
    pub sin_26: f64,
    pub cos_26: f64,
    pub sin_13: f64,
    pub cos_13: f64,
    pub weeks_since_first_seen_upc: i64,
    pub weeks_since_first_seen_store_upc: i64,
    pub lag_1: f64,
    pub lag_2: f64,
    pub lag_4: f64,
    pub rolling_mean_4: f64,
    pub rolling_mean_13: f64,
    pub miss_lag_1: bool,
    pub miss_lag_2: bool,
    pub miss_lag_4: bool,
    pub miss_roll_4: bool,
    pub miss_roll_13: bool,
    pub promo_intensity_store_week: f64,
    pub n_neighbors_sw_cat: usize,
    pub neighbor_promo_share_sw_cat: f64,
    pub n_same_brand_neighbors_sw_cat: usize,
    pub same_brand_neighbor_promo_share_sw_cat: f64,
    pub lag1_neighbor_mean: f64,
    pub lag1_same_brand_neighbor_mean: f64,
    pub roll4_neighbor_mean: f64,
    pub miss_lag1_neighbor_mean: bool,
    pub miss_lag1_same_brand_neighbor_mean: bool,
    pub miss_roll4_neighbor_mean: bool,
    pub store_category_upc_count_static: usize,
    pub same_brand_upc_count_store_cat_static: usize,
    pub n_new_neighbors_13w: usize,
    pub share_new_neighbors_13w: f64,
    pub is_synthetic_row: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePanel {
    pub rows: Vec<FeatureRow>,
    pub first_week: i64,
}

/// `(sin, cos)` pairs for periods 52, 26, 13 at a gap-free week rank.
pub fn fourier_terms(week_rank: i64) -> [(f64, f64); 3] {
    FOURIER_PERIODS.map(|p| {
        let angle = 2.0 * PI * week_rank as f64 / p;
        (angle.sin(), angle.cos())
    })
}

fn lag(ys: &[Option<f64>], pos: usize, k: usize) -> Option<f64> {
    if pos >= k {
        ys[pos - k]
    } else {
        None
    }
}

fn rolling_mean(ys: &[Option<f64>], pos: usize, window: usize) -> Option<f64> {
    let start = pos.saturating_sub(window);
    let vals: Vec<f64> = ys[start..pos].iter().flatten().copied().collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

fn mean(vals: &[f64]) -> Option<f64> {
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

struct SeriesState {
    lag1: Option<f64>,
    lag2: Option<f64>,
    lag4: Option<f64>,
    roll4: Option<f64>,
    roll13: Option<f64>,
    first_seen_store: i64,
}

/// Per observed row, the quantities neighbours need to see.
struct PeerInfo<'a> {
    upc: &'a str,
    brand: &'a str,
    on_promo: bool,
    lag1: Option<f64>,
    roll4: Option<f64>,
    weeks_since_store: i64,
}

/// Builds the feature panel. `split_end`, when given, is the last week whose
/// rows may feed split-level statistics (the static assortment counts).
pub fn engineer_features(cal: &CalendarPanel, split_end: Option<i64>) -> Result<FeaturePanel> {
    let first_week = cal.first_week;
    let stat_cutoff = split_end.unwrap_or(i64::MAX);

    // first sighting of each UPC anywhere
    let mut first_seen_upc: HashMap<&str, i64> = HashMap::new();
    for r in cal.rows.iter().filter(|r| r.observed.is_some()) {
        let e = first_seen_upc.entry(&r.upc_code).or_insert(r.week_id);
        *e = (*e).min(r.week_id);
    }

    // lag / rolling state per grid row (rows are grouped by series, sorted by week)
    let mut state: Vec<Option<SeriesState>> = Vec::with_capacity(cal.rows.len());
    let mut start = 0;
    while start < cal.rows.len() {
        let key = (&cal.rows[start].store_code, &cal.rows[start].upc_code);
        let mut end = start;
        while end < cal.rows.len() && (&cal.rows[end].store_code, &cal.rows[end].upc_code) == key {
            end += 1;
        }
        let block = &cal.rows[start..end];
        let ys: Vec<Option<f64>> = block.iter().map(|r| r.observed.as_ref().map(|o| o.y)).collect();
        let first_seen_store = block
            .iter()
            .find(|r| r.observed.is_some())
            .map(|r| r.week_id)
            .unwrap_or(block[0].week_id);
        for (pos, r) in block.iter().enumerate() {
            if r.observed.is_none() {
                state.push(None);
                continue;
            }
            state.push(Some(SeriesState {
                lag1: lag(&ys, pos, 1),
                lag2: lag(&ys, pos, 2),
                lag4: lag(&ys, pos, 4),
                roll4: rolling_mean(&ys, pos, 4),
                roll13: rolling_mean(&ys, pos, 13),
                first_seen_store,
            }));
        }
        start = end;
    }

    // store-week and store-week-category peer groups over observed rows
    let mut store_week: BTreeMap<(&str, i64), (usize, usize)> = BTreeMap::new();
    let mut peers: BTreeMap<(&str, i64, &str), Vec<PeerInfo>> = BTreeMap::new();
    let mut assortment: BTreeMap<(&str, &str), BTreeSet<&str>> = BTreeMap::new();
    let mut brand_assortment: BTreeMap<(&str, &str, &str), BTreeSet<&str>> = BTreeMap::new();
    for (r, st) in cal.rows.iter().zip(&state) {
        let (Some(o), Some(st)) = (&r.observed, st) else { continue };
        let sw = store_week.entry((&r.store_code, r.week_id)).or_default();
        sw.0 += 1;
        sw.1 += o.on_promo as usize;
        peers
            .entry((&r.store_code, r.week_id, &o.category_code))
            .or_default()
            .push(PeerInfo {
                upc: &r.upc_code,
                brand: &o.brand_family,
                on_promo: o.on_promo,
                lag1: st.lag1,
                roll4: st.roll4,
                weeks_since_store: r.week_id - st.first_seen_store,
            });
        if r.week_id <= stat_cutoff {
            assortment
                .entry((&r.store_code, &o.category_code))
                .or_default()
                .insert(&r.upc_code);
            brand_assortment
                .entry((&r.store_code, &o.category_code, &o.brand_family))
                .or_default()
                .insert(&r.upc_code);
        }
    }

    let mut rows = Vec::new();
    for (r, st) in cal.rows.iter().zip(&state) {
        let (Some(o), Some(st)) = (&r.observed, st) else { continue };
        if cal.globally_missing_weeks.contains(&r.week_id) {
            continue;
        }
        let week_rank = r.week_id - first_week + 1;
        let [(s52, c52), (s26, c26), (s13, c13)] = fourier_terms(week_rank);
        let (n_sw, n_promo) = store_week[&(r.store_code.as_str(), r.week_id)];

        let group = &peers[&(r.store_code.as_str(), r.week_id, o.category_code.as_str())];
        let others: Vec<&PeerInfo> = group.iter().filter(|p| p.upc != r.upc_code).collect();
        let same_brand: Vec<&&PeerInfo> = others.iter().filter(|p| p.brand == o.brand_family).collect();
        let share = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let lag1_nb = mean(&others.iter().filter_map(|p| p.lag1).collect::<Vec<_>>());
        let lag1_sb = mean(&same_brand.iter().filter_map(|p| p.lag1).collect::<Vec<_>>());
        let roll4_nb = mean(&others.iter().filter_map(|p| p.roll4).collect::<Vec<_>>());
        let n_new = others
            .iter()
            .filter(|p| p.weeks_since_store <= NEW_NEIGHBOR_WEEKS)
            .count();

        let store_cat_count = assortment
            .get(&(r.store_code.as_str(), o.category_code.as_str()))
            .map_or(0, |s| s.len());
        let same_brand_count = brand_assortment
            .get(&(r.store_code.as_str(), o.category_code.as_str(), o.brand_family.as_str()))
            .map_or(0, |s| s.len() - usize::from(s.contains(r.upc_code.as_str())));

        let first_upc = *first_seen_upc
            .get(r.upc_code.as_str())
            .ok_or_else(|| Error::Domain(format!("UPC {} has no observed rows", r.upc_code)))?;

        rows.push(FeatureRow {
            store_code: r.store_code.clone(),
            upc_code: r.upc_code.clone(),
            week_id: r.week_id,
            brand_family: o.brand_family.clone(),
            style_segment: o.style_segment.clone(),
            category_code: o.category_code.clone(),
            liters_per_upc: o.liters_per_upc,
            u: o.u,
            y: o.y,
            on_promo: o.on_promo,
            week_rank,
            sin_52: s52,
            cos_52: c52,
            sin_26: s26,
            cos_26: c26,
            sin_13: s13,
            cos_13: c13,
            weeks_since_first_seen_upc: r.week_id - first_upc,
            weeks_since_first_seen_store_upc: r.week_id - st.first_seen_store,
            lag_1: st.lag1.unwrap_or(0.0),
            lag_2: st.lag2.unwrap_or(0.0),
            lag_4: st.lag4.unwrap_or(0.0),
            rolling_mean_4: st.roll4.unwrap_or(0.0),
            rolling_mean_13: st.roll13.unwrap_or(0.0),
            miss_lag_1: st.lag1.is_none(),
            miss_lag_2: st.lag2.is_none(),
            miss_lag_4: st.lag4.is_none(),
            miss_roll_4: st.roll4.is_none(),
            miss_roll_13: st.roll13.is_none(),
            promo_intensity_store_week: share(n_promo, n_sw),
            n_neighbors_sw_cat: others.len(),
            neighbor_promo_share_sw_cat: share(others.iter().filter(|p| p.on_promo).count(), others.len()),
            n_same_brand_neighbors_sw_cat: same_brand.len(),
            same_brand_neighbor_promo_share_sw_cat: share(
                same_brand.iter().filter(|p| p.on_promo).count(),
                same_brand.len(),
            ),
            lag1_neighbor_mean: lag1_nb.unwrap_or(0.0),
            lag1_same_brand_neighbor_mean: lag1_sb.unwrap_or(0.0),
            roll4_neighbor_mean: roll4_nb.unwrap_or(0.0),
            miss_lag1_neighbor_mean: lag1_nb.is_none(),
            miss_lag1_same_brand_neighbor_mean: lag1_sb.is_none(),
            miss_roll4_neighbor_mean: roll4_nb.is_none(),
            store_category_upc_count_static: store_cat_count,
            same_brand_upc_count_store_cat_static: same_brand_count,
            n_new_neighbors_13w: n_new,
            share_new_neighbors_13w: share(n_new, others.len()),
            is_synthetic_row: false,
        });
    }
    Ok(FeaturePanel { rows, first_week })
}

pub fn write_feature_panel<W: std::io::Write>(fp: &FeaturePanel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in &fp.rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
