//! Cleans a raw scanner panel: unit normalization, identification filters,
//! outlier removal, calendar completion and feature engineering. Reads a CSV
//! path from the first argument or generates a synthetic panel.

use demand_surface::panel::synth::{generate_synthetic_panel, SynthConfig};
use demand_surface::panel::{clean_panel, engineer_features, load_panel, FilterConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let raw = match std::env::args().nth(1) {
        Some(path) => load_panel(path)?,
        None => generate_synthetic_panel(&SynthConfig::default())?.0,
    };
    let (clean, calendar, report) = clean_panel(&raw, &FilterConfig::default())?;
    let features = engineer_features(&calendar, None)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("{} raw rows, {} clean rows, {} feature rows", raw.len(), clean.len(), features.rows.len());
    Ok(())
}
