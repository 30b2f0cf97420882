//! Scores elasticity plausibility and ranks hyperparameter trials by the
//! robust selection criterion.

use demand_surface::evaluation::{elasticity_score, robust_aggregate, select_trial, Evaluation, TrialSummary};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let score = elasticity_score(&[-1.0, -2.0, -3.0, -6.0], &[0.5, -2.0], -2.0)?;
    println!("{score:?}");
    println!("robust aggregate of 0.6, 0.7, 0.8: {}", robust_aggregate(&[0.6, 0.7, 0.8])?);

    let runs = |r2: [f64; 3], s: [f64; 3]| -> Vec<Evaluation> {
        (0..3)
            .map(|fold| Evaluation {
                fold,
                seed: 0,
                r2: r2[fold],
                s_elast: s[fold],
            })
            .collect()
    };
    let trials = vec![
        TrialSummary::new(0, runs([0.70, 0.72, 0.69], [0.60, 0.62, 0.61]))?,
        TrialSummary::new(1, runs([0.80, 0.55, 0.78], [0.70, 0.40, 0.72]))?,
        TrialSummary::new(2, runs([0.71, 0.70, 0.72], [0.66, 0.65, 0.64]))?,
    ];
    for t in &trials {
        println!("trial {}: R2 {:.4}, S_elast {:.4}, select {:.4}", t.trial, t.r2_robust, t.s_elast_robust, t.s_select);
    }
    println!("selected trial {}", select_trial(&trials)?);
    Ok(())
}
