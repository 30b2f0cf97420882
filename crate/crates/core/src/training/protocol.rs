//! Two-phase training: a smoothed log-linear warm start with the nonlinear
//! price heads frozen, then the full model on raw targets.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backward::{batch_gradients, Freeze};
use super::config::RunConfig;
use super::data::PreparedData;
use super::loss::{instance_loss, LossBreakdown, LossConfig};
use super::optim::{AdamW, Plateau};
use crate::error::{Error, Result};
use crate::evaluation::metrics::split_metrics;
use crate::model::params::ModelParams;
use crate::model::{DemandModel, GraphMode, SparseGraph};
use crate::panel::wide::WideInstance;
use crate::rng::{substream, STREAM_DATA, STREAM_DROPOUT};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub phase: u8,
    pub lr: f64,
    pub fit: f64,
    pub smooth: f64,
    pub band: f64,
    pub total: f64,
    pub val_r2: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation parameters with the frozen training-split graph.
    pub model: DemandModel,
    pub log: Vec<EpochLog>,
    /// Best validation fit loss after each warm-start epoch.
    pub warm_start_best: Vec<f64>,
    /// Parameters retained at the end of the warm start.
    pub warm_start_params: ModelParams,
    /// Reason training stopped early on a non-finite loss or gradient.
    pub aborted: Option<String>,
}

/// Evaluation-mode loss and predictions of a split on a given graph.
pub fn evaluate_split(
    model: &DemandModel,
    split: &[WideInstance],
    targets: &[Vec<f64>],
    graph: &SparseGraph,
    loss_cfg: &LossConfig,
) -> Result<(LossBreakdown, Vec<Vec<f64>>)> {
    let mut parts = Vec::new();
    let mut preds = Vec::with_capacity(split.len());
    for ((inst, t), (surf, pt)) in split.iter().zip(targets).zip(model.surfaces(split, graph)?) {
        if let Some((lb, _)) = instance_loss(&surf, &pt, t, &inst.m, loss_cfg, 1.0) {
            parts.push(lb);
        }
        preds.push(pt.y_hat);
    }
    Ok((LossBreakdown::mean(&parts, loss_cfg), preds))
}

struct Phase<'a> {
    id: u8,
    lr: f64,
    epochs: usize,
    freeze: Freeze,
    train_targets: &'a [Vec<f64>],
    val_targets: &'a [Vec<f64>],
}

struct PhaseResult {
    best: ModelParams,
    best_history: Vec<f64>,
    aborted: Option<String>,
}

fn run_phase(
    model: &mut DemandModel,
    data: &PreparedData,
    cfg: &RunConfig,
    phase: Phase,
    shuffle: &mut ChaCha8Rng,
    dropout: &mut ChaCha8Rng,
    log: &mut Vec<EpochLog>,
) -> Result<PhaseResult> {
    let tc = &cfg.train;
    let mut opt = AdamW::new(&model.params, tc.adam());
    let mut sched = Plateau::new(phase.lr, tc.plateau_factor, tc.plateau_patience);
    let mut lr = phase.lr;
    let mut best = model.params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_history = Vec::with_capacity(phase.epochs);
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let use_dropout = model.config.dropout > 0.0;
    let mut steps = 0usize;

    for epoch in 0..phase.epochs {
        order.shuffle(shuffle);
        let mut sums = LossBreakdown::default();
        let mut weight = 0usize;
        for idx in order.chunks(tc.batch_size) {
            let batch: Vec<&WideInstance> = idx.iter().map(|&i| &data.train[i]).collect();
            let targets: Vec<&[f64]> = idx.iter().map(|&i| phase.train_targets[i].as_slice()).collect();
            let rng = use_dropout.then_some(&mut *dropout);
            let step = batch_gradients(model, &batch, &targets, GraphMode::Online, rng, &cfg.loss, phase.freeze);
            let (loss, grads) = match step {
                Ok(v) => v,
                Err(Error::NonFiniteGradient(block)) => {
                    let reason = format!("non-finite gradient in {block} (phase {}, epoch {epoch})", phase.id);
                    log::error!("{reason}");
                    return Ok(PhaseResult { best, best_history, aborted: Some(reason) });
                }
                Err(e) => return Err(e),
            };
            if !loss.total.is_finite() {
                let reason = format!("non-finite loss (phase {}, epoch {epoch})", phase.id);
                log::error!("{reason}");
                return Ok(PhaseResult { best, best_history, aborted: Some(reason) });
            }
            log::debug!(
                "phase {} epoch {epoch} batch: fit {:.5} smooth {:.5} band {:.5}",
                phase.id,
                loss.fit,
                loss.smooth,
                loss.band
            );
            let active = batch.iter().filter(|w| w.n_observed() > 0).count();
            sums.fit += loss.fit * active as f64;
            sums.smooth += loss.smooth * active as f64;
            sums.band += loss.band * active as f64;
            sums.total += loss.total * active as f64;
            weight += active;
            steps += 1;
            let ramp = if steps < tc.warmup_steps { steps as f64 / tc.warmup_steps as f64 } else { 1.0 };
            opt.step(&mut model.params, grads, lr * ramp, phase.freeze);
        }

        let graph = model.compute_frozen_graph(&data.train)?;
        let (val, preds) = evaluate_split(model, &data.val, phase.val_targets, &graph, &cfg.loss)?;
        let val_r2 = split_metrics(&preds, &data.val).ok().map(|m| m.r2);
        let w = weight.max(1) as f64;
        let entry = EpochLog {
            epoch,
            phase: phase.id,
            lr,
            fit: sums.fit / w,
            smooth: sums.smooth / w,
            band: sums.band / w,
            total: sums.total / w,
            val_r2,
        };
        log::info!(
            "phase {} epoch {epoch}: train {:.5} val fit {:.5} val r2 {:?}",
            phase.id,
            entry.total,
            val.fit,
            val_r2
        );
        log.push(entry);

        if !val.fit.is_finite() {
            let reason = format!("non-finite validation loss (phase {}, epoch {epoch})", phase.id);
            log::error!("{reason}");
            return Ok(PhaseResult { best, best_history, aborted: Some(reason) });
        }
        if val.fit < best_val {
            best_val = val.fit;
            best = model.params.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        best_history.push(best_val);
        lr = sched.observe(val.fit);
        if since_best >= tc.early_stop_patience {
            log::info!("phase {} stopped early after epoch {epoch}", phase.id);
            break;
        }
    }
    Ok(PhaseResult { best, best_history, aborted: None })
}

/// Runs the warm start and the full phase, keeps the best validation
/// parameters of each and freezes the graph on the training split.
pub fn train_model(cfg: &RunConfig, data: &PreparedData) -> Result<TrainOutcome> {
    cfg.validate()?;
    let seed = cfg.train.seed;
    let mut model = DemandModel::new(
        cfg.model.clone(),
        data.universe.clone(),
        &data.train,
        seed,
        cfg.train.beta_prior,
    )?;
    let mut shuffle = substream(seed, STREAM_DATA);
    let mut dropout = substream(seed, STREAM_DROPOUT);
    let mut log = Vec::new();

    let warm = run_phase(
        &mut model,
        data,
        cfg,
        Phase {
            id: 0,
            lr: cfg.train.lr_p0,
            epochs: cfg.train.epochs_p0,
            freeze: Freeze::WarmStart,
            train_targets: &data.train_smoothed,
            val_targets: &data.val_smoothed,
        },
        &mut shuffle,
        &mut dropout,
        &mut log,
    )?;
    model.params = warm.best.clone();
    let mut aborted = warm.aborted;

    if aborted.is_none() {
        let raw_train: Vec<Vec<f64>> = data.train.iter().map(|w| w.y.clone()).collect();
        let raw_val: Vec<Vec<f64>> = data.val.iter().map(|w| w.y.clone()).collect();
        let full = run_phase(
            &mut model,
            data,
            cfg,
            Phase {
                id: 1,
                lr: cfg.train.lr_p1,
                epochs: cfg.train.epochs_p1,
                freeze: Freeze::None,
                train_targets: &raw_train,
                val_targets: &raw_val,
            },
            &mut shuffle,
            &mut dropout,
            &mut log,
        )?;
        model.params = full.best;
        aborted = full.aborted;
    }
    model.freeze_graph(&data.train)?;
    model.split = Some(data.split);
    Ok(TrainOutcome {
        model,
        log,
        warm_start_best: warm.best_history,
        warm_start_params: warm.best,
        aborted,
    })
}

/// One JSON object per line.
pub fn log_to_jsonl(log: &[EpochLog]) -> Result<String> {
    let mut out = String::new();
    for e in log {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}
