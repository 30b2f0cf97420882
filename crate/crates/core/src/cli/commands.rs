//! Subcommand implementations.

use std::path::Path;

use super::manifest::RunManifest;
use super::*;
use crate::error::{Error, Result};
use crate::evaluation::benchmark::write_benchmark_csv;
use crate::evaluation::{
    benchmark_records, evaluate_panel, extract_elasticities, read_records, run_benchmark, stability_diagnostics,
    write_records, EvalConfig, MetricPair, RunTag,
};
use crate::io::strict_toml;
use crate::model::{verify_model, DemandModel};
use crate::panel::features::write_feature_panel;
use crate::panel::raw::write_raw_panel;
use crate::panel::{
    clean_panel, engineer_features, generate_synthetic_panel, load_panel, normalize_units, FilterConfig, PanelRow,
    SynthConfig,
};
use crate::training::{log_to_jsonl, prepare_data, prepare_split, train_model, RunConfig};

pub fn dispatch(command: Command, args: &[String]) -> Result<i32> {
    match command {
        Command::Preprocess(a) => preprocess(a, args),
        Command::Synth(a) => synth(a, args),
        Command::Train(a) => train(a, args),
        Command::Evaluate(a) => evaluate(a, args),
        Command::Elasticity(a) => elasticity(a, args),
        Command::Benchmark(a) => benchmark(a, args),
        Command::Compare(a) => compare(a, args),
        Command::Verify(a) => verify(a, args),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn optional_text(path: &Option<PathBuf>) -> Result<String> {
    path.as_deref().map(read_text).transpose().map(Option::unwrap_or_default)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// Loads a cleaned panel written by `preprocess`. Filters are not reapplied.
pub fn load_clean(path: &Path) -> Result<Vec<PanelRow>> {
    let raw = load_panel(path)?;
    let (rows, _) = normalize_units(&raw, FilterConfig::default().min_price)?;
    Ok(rows)
}

fn run_config(path: &Option<PathBuf>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_toml(&optional_text(path)?)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn preprocess(a: PreprocessArgs, args: &[String]) -> Result<i32> {
    let mut m = RunManifest::start("preprocess", args);
    let cfg: FilterConfig = strict_toml(&optional_text(&a.config)?)?;
    cfg.validate()?;
    m.config(&toml::to_string(&cfg).map_err(|e| Error::Config(e.to_string()))?);
    m.input(&a.data)?;
    let raw = load_panel(&a.data)?;
    let (clean, calendar, report) = clean_panel(&raw, &cfg)?;
    let features = engineer_features(&calendar, None)?;
    let kept: Vec<_> = clean.iter().map(PanelRow::to_raw).collect();
    m.output(&a.out.join("clean.csv"), &csv_bytes(|b| write_raw_panel(&kept, b))?)?;
    m.output(&a.out.join("features.csv"), &csv_bytes(|b| write_feature_panel(&features, b))?)?;
    m.output(&a.out.join("preprocess_report.json"), &json_bytes(&report)?)?;
    m.finish()?;
    log::info!("{} of {} rows retained", clean.len(), raw.len());
    Ok(EXIT_OK)
}

fn synth(a: SynthArgs, args: &[String]) -> Result<i32> {
    let mut m = RunManifest::start("synth", args);
    let mut cfg: SynthConfig = strict_toml(&optional_text(&a.config)?)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    m.config(&toml::to_string(&cfg).map_err(|e| Error::Config(e.to_string()))?);
    m.seed = Some(cfg.seed);
    let (rows, truth) = generate_synthetic_panel(&cfg)?;
    m.output(&a.out.join("panel.csv"), &csv_bytes(|b| write_raw_panel(&rows, b))?)?;
    m.output(&a.out.join("truth.json"), &json_bytes(&truth)?)?;
    m.finish()?;
    Ok(EXIT_OK)
}

fn train(a: TrainArgs, args: &[String]) -> Result<i32> {
    let mut m = RunManifest::start("train", args);
    let cfg = run_config(&a.config, a.seed)?;
    let cfg_text = cfg.to_toml();
    m.config(&cfg_text);
    m.seed = Some(cfg.train.seed);
    m.input(&a.data)?;
    let clean = load_clean(&a.data)?;
    let data = prepare_data(&clean, cfg.train.val_fraction, cfg.train.smoothing_window)?;
    let out = train_model(&cfg, &data)?;
    m.output(&a.out.join("model.json"), out.model.to_json()?.as_bytes())?;
    m.output(&a.out.join("train_log.jsonl"), log_to_jsonl(&out.log)?.as_bytes())?;
    m.output(&a.out.join("run_config.toml"), cfg_text.as_bytes())?;
    m.finish()?;
    if let Some(reason) = out.aborted {
        eprintln!("error: training aborted: {reason}");
        return Ok(EXIT_DATA);
    }
    Ok(EXIT_OK)
}

fn evaluate(a: EvaluateArgs, args: &[String]) -> Result<i32> {
    let mut m = RunManifest::start("evaluate", args);
    let cfg = run_config(&a.config, None)?;
    m.config(&cfg.to_toml());
    m.seed = Some(a.seed);
    m.input(&a.data)?;
    let clean = load_clean(&a.data)?;
    let eval = EvalConfig {
        folds: a.folds,
        seeds: a.seeds,
        bootstrap_reps: a.bootstrap_reps,
        block_len: a.block_len,
        seed: a.seed,
    };
    let out = evaluate_panel(&clean, &cfg, &eval)?;
    m.output(&a.out.join("evaluation.json"), &json_bytes(&out.report)?)?;
    m.output(&a.out.join("icdn_records.csv"), &csv_bytes(|b| write_records(&out.icdn_records, b))?)?;
    m.output(&a.out.join("benchmark_records.csv"), &csv_bytes(|b| write_records(&out.benchmark_records, b))?)?;
    m.output(&a.out.join("metric_pairs.json"), &json_bytes(&out.metric_pairs)?)?;
    m.finish()?;
    Ok(EXIT_OK)
}

fn elasticity(a: ElasticityArgs, args: &[String]) -> Result<i32> {
    let mut m = RunManifest::start("elasticity", args);
    m.input(&a.ckpt)?;
    m.input(&a.data)?;
    let model = DemandModel::load(&a.ckpt)?;
    m.seed = Some(model.seed);
    let split = model
        .split
        .ok_or_else(|| Error::Config("checkpoint carries no training split".into()))?;
    let data = prepare_split(&load_clean(&a.data)?, split, 1)?;
    if data.universe != model.universe {
        return Err(Error::Shape("panel products do not match the checkpoint".into()));
    }
    let instances = match a.split {
        SplitChoice::Train => data.train,
        SplitChoice::Val => data.val,
        SplitChoice::All => data.train.into_iter().chain(data.val).collect(),
    };
    let tag = RunTag { fold: None, seed: Some(model.seed), replicate: None };
    let records = extract_elasticities(&model, &instances, tag)?;
    m.output(&a.out, &csv_bytes(|b| write_records(&records, b))?)?;
    m.finish()?;
    Ok(EXIT_OK)
}

fn benchmark(a: BenchmarkArgs, args: &[String]) -> Result<i32> {
    let mut m = RunManifest::start("benchmark", args);
    m.input(&a.data)?;
    let data = prepare_data(&load_clean(&a.data)?, a.val_fraction, 1)?;
    let (fits, skipped) = run_benchmark(&data.features, data.split);
    let records = benchmark_records(&fits, RunTag::default());
    m.output(&a.out.join("fits.csv"), &csv_bytes(|b| write_benchmark_csv(&fits, b))?)?;
    m.output(
        &a.out.join("skipped.csv"),
        &csv_bytes(|b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["store", "i", "j", "reason"])?;
            for s in &skipped {
                w.write_record([s.store.as_str(), &s.i, &s.j, s.reason.label()])?;
            }
            w.flush().map_err(|e| Error::io("skipped.csv", e))
        })?,
    )?;
    m.output(&a.out.join("benchmark_records.csv"), &csv_bytes(|b| write_records(&records, b))?)?;
    m.finish()?;
    log::info!("{} groups fitted, {} skipped", fits.len(), skipped.len());
    Ok(EXIT_OK)
}

fn read_records_file(path: &Path) -> Result<Vec<crate::evaluation::ElasticityRecord>> {
    read_records(std::fs::File::open(path).map_err(|e| Error::io(path, e))?)
}

fn compare(a: CompareArgs, args: &[String]) -> Result<i32> {
    let mut m = RunManifest::start("compare", args);
    m.input(&a.icdn)?;
    m.input(&a.benchmark)?;
    let pairs: Vec<MetricPair> = match &a.pairs {
        Some(p) => {
            m.input(p)?;
            serde_json::from_str(&read_text(p)?)?
        }
        None => Vec::new(),
    };
    let report = stability_diagnostics(&read_records_file(&a.icdn)?, &read_records_file(&a.benchmark)?, &pairs);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    m.output(&a.out, &json_bytes(&report)?)?;
    m.finish()?;
    Ok(EXIT_OK)
}

fn verify(a: VerifyArgs, args: &[String]) -> Result<i32> {
    let mut m = RunManifest::start("verify", args);
    m.input(&a.ckpt)?;
    m.seed = Some(a.seed);
    let model = DemandModel::load(&a.ckpt)?;
    let contexts = match &a.data {
        Some(path) => {
            m.input(path)?;
            let split = model
                .split
                .ok_or_else(|| Error::Config("checkpoint carries no training split".into()))?;
            prepare_split(&load_clean(path)?, split, 1)?.val
        }
        None => Vec::new(),
    };
    let report = verify_model(&model, &contexts, a.points, a.step, a.seed)?;
    let bytes = json_bytes(&report)?;
    match &a.out {
        Some(out) => {
            m.output(out, &bytes)?;
            m.finish()?;
        }
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(EXIT_OK)
}
