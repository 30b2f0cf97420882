//! Fold-seed evaluation and block-bootstrap replication of the surface model
//! and the pairwise benchmark on a cleaned panel.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::benchmark::{benchmark_fit, pairwise_rows, run_benchmark, BenchmarkFit, PairRow, CONTROL_COLUMNS};
use super::diagnostics::MetricPair;
use super::folds::{block_bootstrap, make_folds, FoldPlan, DEFAULT_BLOCK_LEN, DEFAULT_BOOTSTRAP_REPS, DEFAULT_FOLDS};
use super::metrics::{masked_mae_rmse, masked_r2, split_metrics, FitMetrics};
use super::records::{benchmark_records, extract_elasticities, ElasticityRecord, RunTag};
use super::score::{elasticity_score, mean, ElasticityScore, Evaluation, TrialSummary};
use crate::error::{Error, Result};
use crate::model::DemandModel;
use crate::panel::PanelRow;
use crate::training::{prepare_data, prepare_split, resample_train, train_model, PreparedData, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub folds: usize,
    pub seeds: usize,
    pub bootstrap_reps: usize,
    pub block_len: usize,
    /// Base seed; seed `s` of a fold trains with `seed + s`.
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: DEFAULT_FOLDS,
            seeds: 1,
            bootstrap_reps: DEFAULT_BOOTSTRAP_REPS,
            block_len: DEFAULT_BLOCK_LEN,
            seed: 0,
        }
    }
}

/// Validation outcome of one fold-seed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRun {
    pub fold: usize,
    pub seed: u64,
    pub train_weeks: (i64, i64),
    pub val_weeks: (i64, i64),
    pub metrics: FitMetrics,
    pub score: ElasticityScore,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: EvalConfig,
    pub plan: FoldPlan,
    pub runs: Vec<FoldRun>,
    pub summary: TrialSummary,
    pub benchmark_fits_per_fold: Vec<usize>,
}

/// Everything produced by [`evaluate_panel`].
#[derive(Debug, Clone)]
pub struct EvaluationOutput {
    pub report: EvaluationReport,
    pub icdn_records: Vec<ElasticityRecord>,
    pub benchmark_records: Vec<ElasticityRecord>,
    pub metric_pairs: Vec<MetricPair>,
}

/// Own and cross estimates of a record set.
pub fn own_cross(records: &[ElasticityRecord]) -> (Vec<f64>, Vec<f64>) {
    let (own, cross): (Vec<&ElasticityRecord>, Vec<&ElasticityRecord>) = records.iter().partition(|r| r.is_own());
    (
        own.iter().map(|r| r.estimate).collect(),
        cross.iter().map(|r| r.estimate).collect(),
    )
}

/// Validation fit of the surface per (store, UPC).
pub fn store_upc_metrics(model: &DemandModel, split: &[crate::panel::WideInstance]) -> Result<BTreeMap<(String, String), [f64; 3]>> {
    let preds = model.predict(split, model.frozen()?)?;
    let mut cells: BTreeMap<(String, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (inst, p) in split.iter().zip(&preds) {
        for i in 0..inst.m.len() {
            if inst.m[i] {
                let c = cells.entry((inst.store_code.clone(), i)).or_default();
                c.0.push(p[i]);
                c.1.push(inst.y[i]);
            }
        }
    }
    let mut out = BTreeMap::new();
    for ((store, i), (yh, y)) in cells {
        let mask = vec![true; y.len()];
        let Ok(r2) = masked_r2(&yh, &y, &mask) else { continue };
        let (mae, rmse) = masked_mae_rmse(&yh, &y, &mask)?;
        out.insert((store, model.universe.products[i].upc.clone()), [r2, mae, rmse]);
    }
    Ok(out)
}

/// Mean benchmark validation fit over the directed pairs of each (store, i).
pub fn benchmark_upc_metrics(fits: &[BenchmarkFit]) -> BTreeMap<(String, String), [f64; 3]> {
    let mut acc: BTreeMap<(String, String), Vec<[f64; 3]>> = BTreeMap::new();
    for f in fits {
        if let Some(r2) = f.val_r2 {
            acc.entry((f.store.clone(), f.i.clone())).or_default().push([r2, f.val_mae, f.val_rmse]);
        }
    }
    acc.into_iter()
        .map(|(k, v)| {
            let col = |c: usize| mean(&v.iter().map(|m| m[c]).collect::<Vec<_>>());
            (k, [col(0), col(1), col(2)])
        })
        .collect()
}

fn with_seed(cfg: &RunConfig, seed: u64) -> RunConfig {
    let mut c = cfg.clone();
    c.train.seed = seed;
    c
}

/// Trains every fold-seed pair, scores it on its validation block and fits
/// the benchmark per fold; then replicates both estimators on block
/// bootstrap resamples of the default holdout training weeks.
pub fn evaluate_panel(clean: &[PanelRow], cfg: &RunConfig, eval: &EvalConfig) -> Result<EvaluationOutput> {
    if eval.seeds == 0 {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let weeks: Vec<i64> = clean.iter().map(|r| r.week_id).collect();
    let plan = make_folds(&weeks, eval.folds)?;
    let mut runs = Vec::new();
    let mut evaluations = Vec::new();
    let mut icdn_records = Vec::new();
    let mut bench_records = Vec::new();
    let mut metric_pairs = Vec::new();
    let mut benchmark_fits_per_fold = Vec::new();

    for f in 0..plan.folds.len() {
        let split = plan.split(f);
        let data = prepare_split(clean, split, cfg.train.smoothing_window)?;
        let (fits, _) = run_benchmark(&data.features, split);
        benchmark_fits_per_fold.push(fits.len());
        bench_records.extend(benchmark_records(&fits, RunTag { fold: Some(f), seed: None, replicate: None }));
        let bench_metrics = benchmark_upc_metrics(&fits);
        for s in 0..eval.seeds {
            let seed = eval.seed + s as u64;
            let out = train_model(&with_seed(cfg, seed), &data)?;
            let preds = out.model.predict(&data.val, out.model.frozen()?)?;
            let metrics = split_metrics(&preds, &data.val)?;
            let recs = extract_elasticities(&out.model, &data.val, RunTag { fold: Some(f), seed: Some(seed), replicate: None })?;
            let (own, cross) = own_cross(&recs);
            let score = elasticity_score(&own, &cross, cfg.train.beta_prior)?;
            log::info!("fold {f} seed {seed}: val r2 {:.4}, s_elast {:.4}", metrics.r2, score.s_elast);
            if s == 0 {
                for ((store, upc), icdn) in store_upc_metrics(&out.model, &data.val)? {
                    if let Some(b) = bench_metrics.get(&(store.clone(), upc.clone())) {
                        metric_pairs.push(MetricPair { store, upc, fold: f, icdn, benchmark: *b });
                    }
                }
            }
            evaluations.push(Evaluation { fold: f, seed, r2: metrics.r2, s_elast: score.s_elast });
            runs.push(FoldRun {
                fold: f,
                seed,
                train_weeks: split.train,
                val_weeks: split.val,
                metrics,
                score,
                aborted: out.aborted,
            });
            icdn_records.extend(recs);
        }
    }

    if eval.bootstrap_reps > 0 {
        let data = prepare_data(clean, cfg.train.val_fraction, cfg.train.smoothing_window)?;
        let (icdn, bench) = bootstrap_estimates(&data, cfg, eval)?;
        icdn_records.extend(icdn);
        bench_records.extend(bench);
    }

    let summary = TrialSummary::new(0, evaluations)?;
    Ok(EvaluationOutput {
        report: EvaluationReport {
            config: *eval,
            plan,
            runs,
            summary,
            benchmark_fits_per_fold,
        },
        icdn_records,
        benchmark_records: bench_records,
        metric_pairs,
    })
}

/// Refits both estimators on each block-bootstrap resample of the training
/// weeks and records validation-split elasticities tagged by replicate.
pub fn bootstrap_estimates(
    data: &PreparedData,
    cfg: &RunConfig,
    eval: &EvalConfig,
) -> Result<(Vec<ElasticityRecord>, Vec<ElasticityRecord>)> {
    let train_weeks: Vec<i64> = data.train.iter().map(|w| w.week_id).collect();
    let reps = block_bootstrap(&train_weeks, eval.block_len, eval.bootstrap_reps, eval.seed)?;
    let pairs = pairwise_rows(&data.features);
    let in_range = |w: i64, (lo, hi): (i64, i64)| w >= lo && w <= hi;
    let mut icdn = Vec::new();
    let mut bench = Vec::new();
    for (r, weeks) in reps.iter().enumerate() {
        let tag = RunTag { fold: None, seed: Some(eval.seed), replicate: Some(r) };
        let resampled = resample_train(data, weeks)?;
        let out = train_model(&with_seed(cfg, eval.seed), &resampled)?;
        icdn.extend(extract_elasticities(&out.model, &data.val, tag)?);

        let mut mult: BTreeMap<i64, usize> = BTreeMap::new();
        for w in weeks {
            *mult.entry(*w).or_default() += 1;
        }
        let mut fits = Vec::new();
        for ((store, i, j), rows) in &pairs {
            let train: Vec<PairRow> = rows
                .iter()
                .filter(|row| in_range(row.week_id, data.split.train))
                .flat_map(|row| std::iter::repeat_n(row.clone(), mult.get(&row.week_id).copied().unwrap_or(0)))
                .collect();
            let val: Vec<PairRow> = rows.iter().filter(|row| in_range(row.week_id, data.split.val)).cloned().collect();
            if let Ok(f) = benchmark_fit((store, i, j), &train, &val, &CONTROL_COLUMNS) {
                fits.push(f);
            }
        }
        bench.extend(benchmark_records(&fits, tag));
        log::info!("bootstrap replicate {r}: {} benchmark fits", fits.len());
    }
    Ok((icdn, bench))
}
