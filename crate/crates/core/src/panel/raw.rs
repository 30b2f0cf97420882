//! Raw weekly scanner rows and CSV ingestion.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// One (store, week, UPC) record as delivered by the scanner feed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
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
}

/// Accepts `0/1`, `true/false` and empty (false).
pub(crate) fn flag<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "t" | "yes" | "y" => Ok(true),
        "0" | "false" | "f" | "no" | "n" | "" => Ok(false),
        other => Err(serde::de::Error::custom(format!("invalid boolean '{other}'"))),
    }
}

impl RawRow {
    fn validate(&self) -> std::result::Result<(), String> {
        if !self.units_sold.is_finite() || self.units_sold < 0.0 {
            return Err(format!("units_sold must be >= 0, got {}", self.units_sold));
        }
        if !self.total_price.is_finite() || self.total_price < 0.0 {
            return Err(format!("total_price must be >= 0, got {}", self.total_price));
        }
        if self.units_per_deal < 1 {
            return Err("units_per_deal must be >= 1".into());
        }
        Ok(())
    }
}

/// Parses a raw panel from any reader. Line numbers in errors count the header
/// as line 1.
pub fn read_panel<R: std::io::Read>(reader: R) -> Result<Vec<RawRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (idx, record) in rdr.deserialize::<RawRow>().enumerate() {
        let line = idx + 2;
        let row = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        row.validate().map_err(|message| Error::Parse { line, message })?;
        let key = (row.store_code.clone(), row.week_id, row.upc_code.clone());
        if !seen.insert(key) {
            return Err(Error::DuplicateKey {
                store: row.store_code,
                week: row.week_id,
                upc: row.upc_code,
                line,
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn load_panel(path: impl AsRef<Path>) -> Result<Vec<RawRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_panel(std::io::BufReader::new(file))
}

pub fn write_raw_panel<W: std::io::Write>(rows: &[RawRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "store_code,upc_code,week_id,units_sold,total_price,units_per_deal,pack_size_text,promo_b,promo_s,promo_c,exclude_flag,brand_family,style_segment,category_code\n";

    #[test]
    fn parses_valid_rows() {
        let body = format!(
            "{HEADER}S1,U1,1,10,5.99,1,6/12OZ,0,0,0,0,B,LAGER,C1\n\
             S1,U1,2,12,5.49,1,6/12OZ,1,0,0,0,B,LAGER,C1\n\
             S1,U2,1,3,11.00,2,750ML,false,false,false,false,B2,ALE,C1\n"
        );
        let rows = read_panel(body.as_bytes()).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[1].promo_b);
        assert_eq!(rows[2].units_per_deal, 2);
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let body = format!(
            "{HEADER}S1,U1,1,10,5.99,1,6/12OZ,0,0,0,0,B,LAGER,C1\n\
             S1,U1,1,11,5.99,1,6/12OZ,0,0,0,0,B,LAGER,C1\n"
        );
        match read_panel(body.as_bytes()) {
            Err(Error::DuplicateKey { store, week, upc, line }) => {
                assert_eq!((store.as_str(), week, upc.as_str(), line), ("S1", 1, "U1", 3));
            }
            other => panic!("expected duplicate key, got {other:?}"),
        }
    }

    #[test]
    fn negative_units_is_a_parse_error() {
        let body = format!("{HEADER}S1,U1,1,-1,5.99,1,6/12OZ,0,0,0,0,B,LAGER,C1\n");
        match read_panel(body.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("units_sold"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_number_carries_line() {
        let body = format!(
            "{HEADER}S1,U1,1,1,5.99,1,6/12OZ,0,0,0,0,B,LAGER,C1\n\
             S1,U1,x,1,5.99,1,6/12OZ,0,0,0,0,B,LAGER,C1\n"
        );
        assert!(matches!(read_panel(body.as_bytes()), Err(Error::Parse { line: 3, .. })));
    }
}
