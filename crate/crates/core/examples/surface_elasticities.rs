//! Trains a small surface on a synthetic panel and prints the elasticity
//! matrix, curvature and predicted demand at one validation store-week.

use demand_surface::model::{ModelConfig, Surface};
use demand_surface::panel::synth::{generate_synthetic_panel, SynthConfig};
use demand_surface::panel::{clean_panel, FilterConfig};
use demand_surface::training::{prepare_data, train_model, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (raw, truth) = generate_synthetic_panel(&SynthConfig {
        seed: 3,
        ..Default::default()
    })?;
    let (clean, _, _) = clean_panel(&raw, &FilterConfig::default())?;
    let mut cfg = RunConfig::default();
    cfg.model = ModelConfig {
        hidden: vec![16],
        d_att: 8,
        dropout: 0.0,
        ..Default::default()
    };
    cfg.train.epochs_p1 = 150;
    cfg.train.batch_size = 16;
    cfg.train.lr_p1 = 5e-4;
    let data = prepare_data(&clean, cfg.train.val_fraction, cfg.train.smoothing_window)?;
    let out = train_model(&cfg, &data)?;
    let graph = out.model.frozen()?.clone();
    let (surface, point): (Surface, _) = out.model.surfaces(&data.val[..1], &graph)?.remove(0);
    let week = &data.val[0];
    println!("store {} week {}", week.store_code, week.week_id);
    let jac = surface.jacobian(&point);
    for (i, p) in out.model.universe.products.iter().enumerate() {
        let row: Vec<String> = jac.row(i).iter().map(|e| format!("{e:7.3}")).collect();
        println!(
            "{}  E = [{}]  kappa {:7.3}  log demand {:6.3} (observed {})",
            p.upc,
            row.join(" "),
            surface.curvature(&point, i),
            point.y_hat[i],
            week.m[i]
        );
    }
    println!("true own elasticities {:?}", truth.own());
    Ok(())
}
