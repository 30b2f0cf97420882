//! Deal correction and liter normalization.

use serde::{Deserialize, Serialize};

use super::raw::{flag, RawRow};
use crate::error::{Error, Result};

pub const LITERS_PER_OZ: f64 = 0.0295735;
pub const LITERS_PER_GAL: f64 = 3.78541;
pub const LITERS_PER_ML: f64 = 0.001;

/// Liters per sellable unit from texts such as `6/12OZ`, `750ML`, `1GAL`.
pub fn parse_pack_size(text: &str) -> Result<f64> {
    let err = || Error::UnitParse(text.to_string());
    let cleaned: String = text
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect::<String>()
        .to_ascii_uppercase();
    let (count, volume) = match cleaned.split_once('/') {
        Some((c, v)) => (c.parse::<f64>().map_err(|_| err())?, v),
        None => (1.0, cleaned.as_str()),
    };
    let split = volume
        .find(|c: char| c.is_ascii_alphabetic())
        .ok_or_else(err)?;
    let (amount, unit) = volume.split_at(split);
    let amount: f64 = amount.parse().map_err(|_| err())?;
    let per_unit = match unit {
        "OZ" => LITERS_PER_OZ,
        "ML" => LITERS_PER_ML,
        "L" => 1.0,
        "GAL" => LITERS_PER_GAL,
        _ => return Err(err()),
    };
    let liters = count * amount * per_unit;
    if liters.is_finite() && liters > 0.0 {
        Ok(liters)
    } else {
        Err(err())
    }
}

/// A unit-normalized observation: liters sold, price per liter and their logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub store_code: String,
    pub upc_code: String,
    pub week_id: i64,
    pub units_sold: f64,
    pub total_price: f64,
    pub units_per_deal: u32,
    pub pack_size_text: String,
    #[serde(deserialize_with = "flag")]
    pub promo_b: bool,
    #[serde(deserialize_with = "flag")]
    pub promo_s: bool,
    #[serde(deserialize_with = "flag")]
    pub promo_c: bool,
    #[serde(deserialize_with = "flag")]
    pub exclude_flag: bool,
    pub brand_family: String,
    pub style_segment: String,
    pub category_code: String,
    pub liters_per_upc: f64,
    pub q_l: f64,
    pub p_l: f64,
    pub u: f64,
    pub y: f64,
    #[serde(deserialize_with = "flag")]
    pub on_promo: bool,
}

impl PanelRow {
    /// The scanner fields this row was normalized from.
    pub fn to_raw(&self) -> RawRow {
        RawRow {
            store_code: self.store_code.clone(),
            upc_code: self.upc_code.clone(),
            week_id: self.week_id,
            units_sold: self.units_sold,
            total_price: self.total_price,
            units_per_deal: self.units_per_deal,
            pack_size_text: self.pack_size_text.clone(),
            promo_b: self.promo_b,
            promo_s: self.promo_s,
            promo_c: self.promo_c,
            exclude_flag: self.exclude_flag,
            brand_family: self.brand_family.clone(),
            style_segment: self.style_segment.clone(),
            category_code: self.category_code.clone(),
        }
    }

    pub fn from_raw(raw: &RawRow, liters: f64) -> PanelRow {
        let p_upc = raw.total_price / raw.units_per_deal as f64;
        let q_l = raw.units_sold * liters;
        let p_l = p_upc / liters;
        PanelRow {
            store_code: raw.store_code.clone(),
            upc_code: raw.upc_code.clone(),
            week_id: raw.week_id,
            units_sold: raw.units_sold,
            total_price: raw.total_price,
            units_per_deal: raw.units_per_deal,
            pack_size_text: raw.pack_size_text.clone(),
            promo_b: raw.promo_b,
            promo_s: raw.promo_s,
            promo_c: raw.promo_c,
            exclude_flag: raw.exclude_flag,
            brand_family: raw.brand_family.clone(),
            style_segment: raw.style_segment.clone(),
            category_code: raw.category_code.clone(),
            liters_per_upc: liters,
            q_l,
            p_l,
            u: p_l.ln(),
            y: q_l.ln(),
            on_promo: raw.promo_b || raw.promo_s || raw.promo_c,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizeReport {
    pub input_rows: usize,
    pub zero_units: usize,
    pub below_min_price: usize,
    pub excluded: usize,
    pub non_finite: usize,
    pub retained: usize,
}

/// Converts raw rows to liter units, dropping rows that cannot carry a
/// positive log-demand / log-price pair. Drop reasons are checked in the order
/// zero units, minimum price, exclusion flag.
pub fn normalize_units(rows: &[RawRow], min_price: f64) -> Result<(Vec<PanelRow>, NormalizeReport)> {
    let mut report = NormalizeReport {
        input_rows: rows.len(),
        ..Default::default()
    };
    let mut out = Vec::with_capacity(rows.len());
    for raw in rows {
        if raw.units_sold == 0.0 {
            report.zero_units += 1;
            continue;
        }
        if raw.total_price <= min_price {
            report.below_min_price += 1;
            continue;
        }
        if raw.exclude_flag {
            report.excluded += 1;
            continue;
        }
        let liters = parse_pack_size(&raw.pack_size_text)?;
        let row = PanelRow::from_raw(raw, liters);
        if !(row.u.is_finite() && row.y.is_finite()) {
            report.non_finite += 1;
            continue;
        }
        out.push(row);
    }
    report.retained = out.len();
    Ok((out, report))
}

pub fn write_panel<W: std::io::Write>(rows: &[PanelRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn read_clean_panel<R: std::io::Read>(reader: R) -> Result<Vec<PanelRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for (idx, rec) in rdr.deserialize::<PanelRow>().enumerate() {
        rows.push(rec.map_err(|e| Error::Parse {
            line: idx + 2,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}
