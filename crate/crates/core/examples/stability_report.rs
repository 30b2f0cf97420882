//! Expanding-fold evaluation with block-bootstrap refits of both estimators,
//! followed by the stability comparison of their elasticity estimates.

use demand_surface::evaluation::{evaluate_panel, stability_diagnostics, EvalConfig};
use demand_surface::model::ModelConfig;
use demand_surface::panel::synth::{generate_synthetic_panel, SynthConfig};
use demand_surface::panel::{clean_panel, FilterConfig};
use demand_surface::training::RunConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (raw, _) = generate_synthetic_panel(&SynthConfig {
        noise_sd: 0.2,
        seed: 6,
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
    cfg.train.epochs_p0 = 10;
    cfg.train.epochs_p1 = 40;
    cfg.train.batch_size = 32;
    let eval = EvalConfig {
        folds: 3,
        seeds: 1,
        bootstrap_reps: 4,
        ..Default::default()
    };
    let out = evaluate_panel(&clean, &cfg, &eval)?;
    for run in &out.report.runs {
        println!("fold {} seed {}: R2 {:.3}, S_elast {:.3}", run.fold, run.seed, run.metrics.r2, run.score.s_elast);
    }
    println!("selection score {:.4}", out.report.summary.s_select);
    let diag = stability_diagnostics(&out.icdn_records, &out.benchmark_records, &out.metric_pairs);
    println!("matched keys {}", diag.matched_keys);
    println!("own: {}", serde_json::to_string_pretty(&diag.own)?);
    for w in &diag.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
