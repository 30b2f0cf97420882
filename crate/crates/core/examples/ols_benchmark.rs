//! Fits the pairwise log-log OLS benchmark with HC1 intervals to every
//! directed product pair of each store.

use demand_surface::evaluation::run_benchmark;
use demand_surface::panel::synth::{generate_synthetic_panel, SynthConfig};
use demand_surface::panel::{clean_panel, FilterConfig};
use demand_surface::training::prepare_data;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (raw, truth) = generate_synthetic_panel(&SynthConfig {
        seed: 4,
        ..Default::default()
    })?;
    let (clean, _, _) = clean_panel(&raw, &FilterConfig::default())?;
    let data = prepare_data(&clean, 0.2, 8)?;
    let (fits, skipped) = run_benchmark(&data.features, data.split);
    println!("{} fits, {} skipped", fits.len(), skipped.len());
    for f in fits.iter().filter(|f| f.store == fits[0].store) {
        let i = truth.upcs.iter().position(|u| *u == f.i).ok_or("unknown product")?;
        let j = truth.upcs.iter().position(|u| *u == f.j).ok_or("unknown product")?;
        println!(
            "{} <- {}: own {:6.3} [{:6.3}, {:6.3}] (truth {:6.3}), cross {:6.3} (truth {:6.3}), controls {}",
            f.i,
            f.j,
            f.beta_own,
            f.ci_own.0,
            f.ci_own.1,
            truth.elasticity[i][i],
            f.beta_cross,
            truth.elasticity[i][j],
            f.controls.len()
        );
    }
    Ok(())
}
