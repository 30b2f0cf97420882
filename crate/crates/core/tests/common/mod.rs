//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use demand_surface::model::{DemandModel, ModelConfig};
use demand_surface::panel::{
    assemble_wide, clean_panel, engineer_features, generate_synthetic_panel, FilterConfig, RawRow, SynthConfig,
    Universe, WideInstance,
};
use rand::Rng;

/// Wide instances from a small noiseless synthetic panel with loose filters.
pub fn synthetic_instances(n_products: usize, n_weeks: usize, seed: u64) -> (Universe, Vec<WideInstance>) {
    let cfg = SynthConfig {
        n_products,
        n_stores: 2,
        n_weeks,
        seed,
        ..Default::default()
    };
    let (rows, _) = generate_synthetic_panel(&cfg).unwrap();
    let filters = FilterConfig {
        min_store_weeks: 0,
        min_series_weeks: 0,
        ..Default::default()
    };
    let (_, cal, _) = clean_panel(&rows, &filters).unwrap();
    let fp = engineer_features(&cal, None).unwrap();
    let uni = Universe::from_rows(&fp.rows);
    let wide = assemble_wide(&fp, &uni).unwrap();
    (uni, wide)
}

pub fn small_config(k_basis: usize, hidden: Vec<usize>) -> ModelConfig {
    ModelConfig {
        k_basis,
        hidden,
        dropout: 0.0,
        d_att: 3,
        embedding_dim: 2,
        ..Default::default()
    }
}

pub fn synthetic_model(n: usize, k_basis: usize, hidden: Vec<usize>, seed: u64) -> (DemandModel, Vec<WideInstance>) {
    let (uni, wide) = synthetic_instances(n, 30, seed);
    let model = DemandModel::new(small_config(k_basis, hidden), uni, &wide, seed, -2.0).unwrap();
    (model, wide)
}

/// Moves every parameter (including zero-initialized heads) off its
/// initial value so all terms of the surface are active.
pub fn enliven(model: &mut DemandModel, seed: u64, scale: f64) {
    let mut rng = demand_surface::rng::substream(seed, "test");
    for (_, block) in model.params.blocks_mut() {
        for v in block.iter_mut() {
            *v += rng.random_range(-scale..scale);
        }
    }
}

/// One-liter scanner row selling ten units at `price` per liter.
pub fn raw_row(store: &str, upc: &str, week: i64, price: f64, promo: bool) -> RawRow {
    RawRow {
        store_code: store.into(),
        upc_code: upc.into(),
        week_id: week,
        units_sold: 10.0,
        total_price: price,
        units_per_deal: 1,
        pack_size_text: "1L".into(),
        promo_b: promo,
        promo_s: false,
        promo_c: false,
        exclude_flag: false,
        brand_family: "B".into(),
        style_segment: "S".into(),
        category_code: "C".into(),
    }
}
