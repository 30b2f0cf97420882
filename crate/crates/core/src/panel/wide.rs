//! Per-store-week wide instances: a complete log-price vector, an
//! observation mask, targets and one token per product.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::features::{fourier_terms, FeaturePanel, FeatureRow};
use crate::error::{Error, Result};

/// Numeric token columns, in order, with whether each is standardized.
/// Boolean indicators pass through raw. The current log price is never a
/// token.
pub const TOKEN_COLUMNS: [(&str, bool); 35] = [
    ("log_liters", true),
    ("week_rank", true),
    ("sin_52", true),
    ("cos_52", true),
    ("sin_26", true),
    ("cos_26", true),
    ("sin_13", true),
    ("cos_13", true),
    ("weeks_since_first_seen_upc", true),
    ("weeks_since_first_seen_store_upc", true),
    ("lag_1", true),
    ("lag_2", true),
    ("lag_4", true),
    ("rolling_mean_4", true),
    ("rolling_mean_13", true),
    ("promo_intensity_store_week", true),
    ("n_neighbors_sw_cat", true),
    ("neighbor_promo_share_sw_cat", true),
    ("n_same_brand_neighbors_sw_cat", true),
    ("same_brand_neighbor_promo_share_sw_cat", true),
    ("lag1_neighbor_mean", true),
    ("lag1_same_brand_neighbor_mean", true),
    ("roll4_neighbor_mean", true),
    ("store_category_upc_count_static", true),
    ("same_brand_upc_count_store_cat_static", true),
    ("n_new_neighbors_13w", true),
    ("share_new_neighbors_13w", true),
    ("on_promo", false),
    ("miss_lag_1", false),
    ("miss_lag_2", false),
    ("miss_lag_4", false),
    ("miss_roll_4", false),
    ("miss_roll_13", false),
    ("miss_lag1_neighbor_mean", false),
    ("observed", false),
];

pub const D_TOK: usize = TOKEN_COLUMNS.len();

/// Categorical slots: store, upc, brand, style, category.
pub const N_CATEGORICAL: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductMeta {
    pub upc: String,
    pub brand: String,
    pub style: String,
    pub category: String,
    pub liters: f64,
}

/// A string vocabulary; index 0 is reserved for unseen values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    pub values: Vec<String>,
}

impl Vocab {
    pub fn from_values<'a>(values: impl IntoIterator<Item = &'a str>) -> Vocab {
        let set: BTreeSet<&str> = values.into_iter().collect();
        Vocab {
            values: set.into_iter().map(String::from).collect(),
        }
    }

    pub fn index(&self, value: &str) -> usize {
        self.values
            .binary_search_by(|v| v.as_str().cmp(value))
            .map_or(0, |i| i + 1)
    }

    /// Table size including the unknown slot.
    pub fn size(&self) -> usize {
        self.values.len() + 1
    }
}

/// Ordered product universe plus categorical vocabularies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Universe {
    pub products: Vec<ProductMeta>,
    pub stores: Vocab,
    pub upcs: Vocab,
    pub brands: Vocab,
    pub styles: Vocab,
    pub categories: Vocab,
}

impl Universe {
    /// Products sorted by UPC code; metadata taken from the first row seen.
    pub fn from_rows(rows: &[FeatureRow]) -> Universe {
        let mut products: BTreeMap<&str, ProductMeta> = BTreeMap::new();
        for r in rows {
            products.entry(&r.upc_code).or_insert_with(|| ProductMeta {
                upc: r.upc_code.clone(),
                brand: r.brand_family.clone(),
                style: r.style_segment.clone(),
                category: r.category_code.clone(),
                liters: r.liters_per_upc,
            });
        }
        let products: Vec<ProductMeta> = products.into_values().collect();
        Universe {
            stores: Vocab::from_values(rows.iter().map(|r| r.store_code.as_str())),
            upcs: Vocab::from_values(products.iter().map(|p| p.upc.as_str())),
            brands: Vocab::from_values(products.iter().map(|p| p.brand.as_str())),
            styles: Vocab::from_values(products.iter().map(|p| p.style.as_str())),
            categories: Vocab::from_values(products.iter().map(|p| p.category.as_str())),
            products,
        }
    }

    pub fn n(&self) -> usize {
        self.products.len()
    }

    pub fn position(&self, upc: &str) -> Option<usize> {
        self.products.iter().position(|p| p.upc == upc)
    }

    pub fn categorical_ids(&self, store: &str, i: usize) -> [usize; N_CATEGORICAL] {
        let p = &self.products[i];
        [
            self.stores.index(store),
            self.upcs.index(&p.upc),
            self.brands.index(&p.brand),
            self.styles.index(&p.style),
            self.categories.index(&p.category),
        ]
    }

    pub fn vocab_sizes(&self) -> [usize; N_CATEGORICAL] {
        [
            self.stores.size(),
            self.upcs.size(),
            self.brands.size(),
            self.styles.size(),
            self.categories.size(),
        ]
    }
}

/// One store-week. `y[i]` is meaningful only where `m[i]` holds.
#[derive(Debug, Clone, PartialEq)]
pub struct WideInstance {
    pub store_code: String,
    pub week_id: i64,
    pub u: Vec<f64>,
    pub m: Vec<bool>,
    pub y: Vec<f64>,
    pub tokens: Array2<f64>,
    pub cats: Vec<[usize; N_CATEGORICAL]>,
}

impl WideInstance {
    pub fn n_observed(&self) -> usize {
        self.m.iter().filter(|m| **m).count()
    }
}

fn b(v: bool) -> f64 {
    if v {
        1.0
    } else {
        0.0
    }
}

/// Raw token for an observed row, in `TOKEN_COLUMNS` order.
pub fn observed_token(r: &FeatureRow) -> [f64; D_TOK] {
    [
        r.liters_per_upc.ln(),
        r.week_rank as f64,
        r.sin_52,
        r.cos_52,
        r.sin_26,
        r.cos_26,
        r.sin_13,
        r.cos_13,
        r.weeks_since_first_seen_upc as f64,
        r.weeks_since_first_seen_store_upc as f64,
        r.lag_1,
        r.lag_2,
        r.lag_4,
        r.rolling_mean_4,
        r.rolling_mean_13,
        r.promo_intensity_store_week,
        r.n_neighbors_sw_cat as f64,
        r.neighbor_promo_share_sw_cat,
        r.n_same_brand_neighbors_sw_cat as f64,
        r.same_brand_neighbor_promo_share_sw_cat,
        r.lag1_neighbor_mean,
        r.lag1_same_brand_neighbor_mean,
        r.roll4_neighbor_mean,
        r.store_category_upc_count_static as f64,
        r.same_brand_upc_count_store_cat_static as f64,
        r.n_new_neighbors_13w as f64,
        r.share_new_neighbors_13w,
        b(r.on_promo),
        b(r.miss_lag_1),
        b(r.miss_lag_2),
        b(r.miss_lag_4),
        b(r.miss_roll_4),
        b(r.miss_roll_13),
        b(r.miss_lag1_neighbor_mean),
        1.0,
    ]
}

/// Token for a product with no economic row this store-week: calendar terms
/// and package size only, every missingness flag set.
pub fn unobserved_token(week_rank: i64, liters: f64) -> [f64; D_TOK] {
    let mut t = [0.0; D_TOK];
    let [(s52, c52), (s26, c26), (s13, c13)] = fourier_terms(week_rank);
    t[..8].copy_from_slice(&[liters.ln(), week_rank as f64, s52, c52, s26, c26, s13, c13]);
    for v in t.iter_mut().take(D_TOK - 1).skip(28) {
        *v = 1.0;
    }
    t
}

/// Builds one instance per store-week with at least one observed product.
/// Log prices are imputed per store along its weeks by forward fill, then
/// backward fill, then the product's overall mean.
pub fn assemble_wide(fp: &FeaturePanel, universe: &Universe) -> Result<Vec<WideInstance>> {
    let n = universe.n();
    let mut col_sum = vec![0.0; n];
    let mut col_count = vec![0usize; n];
    let mut by_store: BTreeMap<&str, BTreeMap<i64, Vec<(usize, &FeatureRow)>>> = BTreeMap::new();
    for r in &fp.rows {
        let Some(i) = universe.position(&r.upc_code) else { continue };
        col_sum[i] += r.u;
        col_count[i] += 1;
        by_store
            .entry(&r.store_code)
            .or_default()
            .entry(r.week_id)
            .or_default()
            .push((i, r));
    }
    let mut col_mean = Vec::with_capacity(n);
    for i in 0..n {
        if col_count[i] == 0 {
            return Err(Error::InsufficientData(format!(
                "UPC {} is never priced, no mean available for imputation",
                universe.products[i].upc
            )));
        }
        col_mean.push(col_sum[i] / col_count[i] as f64);
    }

    let mut out = Vec::new();
    for (store, weeks) in by_store {
        let week_ids: Vec<i64> = weeks.keys().copied().collect();
        let t_len = week_ids.len();
        let mut price: Vec<Vec<Option<f64>>> = vec![vec![None; n]; t_len];
        for (t, rows) in weeks.values().enumerate() {
            for (i, r) in rows {
                price[t][*i] = Some(r.u);
            }
        }
        for i in 0..n {
            let mut last = None;
            for row in price.iter_mut() {
                match row[i] {
                    Some(v) => last = Some(v),
                    None => row[i] = last,
                }
            }
            let mut next = None;
            for row in price.iter_mut().rev() {
                match row[i] {
                    Some(v) => next = Some(v),
                    None => row[i] = next,
                }
            }
        }
        for (t, (&week, rows)) in weeks.iter().enumerate() {
            let week_rank = week - fp.first_week + 1;
            let mut m = vec![false; n];
            let mut y = vec![0.0; n];
            let mut tokens = Array2::zeros((n, D_TOK));
            for i in 0..n {
                let tok = unobserved_token(week_rank, universe.products[i].liters);
                tokens.row_mut(i).assign(&ndarray::ArrayView1::from(&tok));
            }
            for (i, r) in rows {
                m[*i] = true;
                y[*i] = r.y;
                let tok = observed_token(r);
                tokens.row_mut(*i).assign(&ndarray::ArrayView1::from(&tok));
            }
            let u = (0..n).map(|i| price[t][i].unwrap_or(col_mean[i])).collect();
            out.push(WideInstance {
                store_code: store.to_string(),
                week_id: week,
                u,
                m,
                y,
                tokens,
                cats: (0..n).map(|i| universe.categorical_ids(store, i)).collect(),
            });
        }
    }
    Ok(out)
}

/// Trailing rolling means of observed targets per store-product series over
/// the last `window` observations (current one included, at least one
/// required). Instances must be grouped by store and sorted by week.
pub fn smoothed_targets(instances: &[WideInstance], window: usize) -> Vec<Vec<f64>> {
    let window = window.max(1);
    let mut history: BTreeMap<(&str, usize), Vec<f64>> = BTreeMap::new();
    instances
        .iter()
        .map(|inst| {
            (0..inst.y.len())
                .map(|i| {
                    if !inst.m[i] {
                        return inst.y[i];
                    }
                    let h = history.entry((&inst.store_code, i)).or_default();
                    h.push(inst.y[i]);
                    let tail = &h[h.len().saturating_sub(window)..];
                    tail.iter().sum::<f64>() / tail.len() as f64
                })
                .collect()
        })
        .collect()
}

/// Train-split standardization of the numeric token columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScaler {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl TokenScaler {
    pub fn identity() -> TokenScaler {
        TokenScaler {
            mean: vec![0.0; D_TOK],
            sd: vec![1.0; D_TOK],
        }
    }

    pub fn fit(instances: &[WideInstance]) -> TokenScaler {
        let mut scaler = TokenScaler::identity();
        let rows: Vec<ndarray::ArrayView1<f64>> = instances.iter().flat_map(|inst| inst.tokens.rows()).collect();
        if rows.len() < 2 {
            return scaler;
        }
        for (c, (_, standardize)) in TOKEN_COLUMNS.iter().enumerate() {
            if !standardize {
                continue;
            }
            let vals: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
            scaler.mean[c] = mean;
            scaler.sd[c] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
        scaler
    }

    pub fn transform(&self, tokens: &Array2<f64>) -> Array2<f64> {
        let mut out = tokens.clone();
        for mut row in out.rows_mut() {
            for c in 0..D_TOK {
                row[c] = (row[c] - self.mean[c]) / self.sd[c];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::calendar::complete_calendar;
    use crate::panel::features::engineer_features;
    use crate::panel::testutil::series;

    fn panel() -> FeaturePanel {
        let mut rows = series("S", "A", 1..=5, |w| (w as f64, false));
        rows.extend(series("S", "B", 2..=3, |w| (10.0 * w as f64, false)));
        engineer_features(&complete_calendar(&rows), None).unwrap()
    }

    #[test]
    fn forward_and_backward_fill() {
        let fp = panel();
        let uni = Universe::from_rows(&fp.rows);
        let wide = assemble_wide(&fp, &uni).unwrap();
        assert_eq!(wide.len(), 5);
        let b = uni.position("B").unwrap();
        // week 1 backward-filled from week 2, weeks 4-5 forward-filled from week 3
        assert_eq!(wide[0].u[b], 20f64.ln());
        assert_eq!(wide[3].u[b], 30f64.ln());
        assert_eq!(wide[4].u[b], 30f64.ln());
        assert!(!wide[0].m[b] && wide[1].m[b]);
        let total: usize = wide.iter().map(|w| w.n_observed()).sum();
        assert_eq!(total, fp.rows.len());
        assert!(wide.iter().all(|w| w.u.iter().all(|u| u.is_finite())));
    }

    #[test]
    fn column_mean_when_store_never_prices() {
        let mut rows = series("S1", "A", 1..=3, |_| (2.0, false));
        rows.extend(series("S1", "B", 1..=3, |_| (4.0, false)));
        rows.extend(series("S2", "A", 1..=3, |_| (3.0, false)));
        let fp = engineer_features(&complete_calendar(&rows), None).unwrap();
        let uni = Universe::from_rows(&fp.rows);
        let wide = assemble_wide(&fp, &uni).unwrap();
        let s2 = wide.iter().find(|w| w.store_code == "S2").unwrap();
        assert_eq!(s2.u[1], 4f64.ln());
        assert_eq!(s2.tokens[[1, D_TOK - 1]], 0.0);
        assert_eq!(s2.tokens[[0, D_TOK - 1]], 1.0);
    }

    #[test]
    fn unpriced_universe_member_is_an_error() {
        let fp = panel();
        let mut uni = Universe::from_rows(&fp.rows);
        uni.products.push(ProductMeta {
            upc: "Z".into(),
            brand: "B".into(),
            style: "S".into(),
            category: "C".into(),
            liters: 1.0,
        });
        assert!(matches!(assemble_wide(&fp, &uni), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn rolling_target_of_constant_is_constant() {
        let rows = series("S", "A", 1..=12, |_| (2.0, false));
        let fp = engineer_features(&complete_calendar(&rows), None).unwrap();
        let wide = assemble_wide(&fp, &Universe::from_rows(&fp.rows)).unwrap();
        let sm = smoothed_targets(&wide, 8);
        assert!(sm.iter().all(|v| (v[0] - 10f64.ln()).abs() < 1e-15));
    }

    #[test]
    fn rolling_target_is_trailing() {
        let mut rows = series("S", "A", 1..=4, |_| (2.0, false));
        for (k, r) in rows.iter_mut().enumerate() {
            r.y = k as f64;
        }
        let fp = engineer_features(&complete_calendar(&rows), None).unwrap();
        let wide = assemble_wide(&fp, &Universe::from_rows(&fp.rows)).unwrap();
        let sm = smoothed_targets(&wide, 2);
        let got: Vec<f64> = sm.iter().map(|v| v[0]).collect();
        assert_eq!(got, vec![0.0, 0.5, 1.5, 2.5]);
    }

    #[test]
    fn scaler_standardizes_numeric_columns_only() {
        let fp = panel();
        let wide = assemble_wide(&fp, &Universe::from_rows(&fp.rows)).unwrap();
        let sc = TokenScaler::fit(&wide);
        let t = sc.transform(&wide[0].tokens);
        assert_eq!(t[[0, D_TOK - 1]], wide[0].tokens[[0, D_TOK - 1]]);
        assert_eq!(sc.sd[D_TOK - 1], 1.0);
    }
}
