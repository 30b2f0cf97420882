//! Recovers planted own-price elasticities from a constant-elasticity panel.
//! Pass the log-demand noise level as the first argument (default 0).

use demand_surface::evaluation::score::median;
use demand_surface::evaluation::split_metrics;
use demand_surface::panel::synth::{generate_synthetic_panel, SynthConfig};
use demand_surface::panel::{clean_panel, FilterConfig};
use demand_surface::training::{prepare_data, train_model, RunConfig};

const CONFIG: &str = "warmup_steps = 200
epochs_p1 = 1200
early_stop_patience = 150
plateau_patience = 30
hidden = [16]
d_att = 8
dropout = 0.0
lr_p1 = 5e-4
batch_size = 16
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let noise_sd: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0.0);
    let (raw, truth) = generate_synthetic_panel(&SynthConfig {
        noise_sd,
        seed: 5,
        ..Default::default()
    })?;
    let (clean, _, _) = clean_panel(&raw, &FilterConfig::default())?;
    let cfg = RunConfig::from_toml(CONFIG)?;
    let data = prepare_data(&clean, cfg.train.val_fraction, cfg.train.smoothing_window)?;
    let out = train_model(&cfg, &data)?;
    let graph = out.model.frozen()?.clone();
    let surfaces = out.model.surfaces(&data.val, &graph)?;
    let preds: Vec<Vec<f64>> = surfaces.iter().map(|(_, p)| p.y_hat.clone()).collect();
    println!("epochs {}, validation {:?}", out.log.len(), split_metrics(&preds, &data.val)?);
    for (i, product) in out.model.universe.products.iter().enumerate() {
        let own: Vec<f64> = surfaces
            .iter()
            .zip(&data.val)
            .filter(|(_, w)| w.m[i])
            .map(|((s, p), _)| s.elasticity_own(p, i))
            .collect();
        let t = truth.upcs.iter().position(|u| *u == product.upc).ok_or("unknown product")?;
        println!(
            "{}: median own elasticity {:.3}, truth {:.3}",
            product.upc,
            median(&own).unwrap_or(f64::NAN),
            truth.elasticity[t][t]
        );
    }
    Ok(())
}
