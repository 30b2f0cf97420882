//! Per-instance elasticity records from a trained surface or the benchmark.

use serde::{Deserialize, Serialize};

use super::benchmark::BenchmarkFit;
use crate::error::{Error, Result};
use crate::model::{DemandModel, Provenance};
use crate::panel::wide::WideInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Icdn,
    Benchmark,
}

/// One elasticity estimate. `j == i` for own-price records; `week` is set
/// for per-instance surface records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticityRecord {
    pub source: Source,
    pub store: String,
    pub i: String,
    pub j: String,
    pub week: Option<i64>,
    pub fold: Option<usize>,
    pub seed: Option<u64>,
    pub replicate: Option<usize>,
    pub estimate: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

impl ElasticityRecord {
    pub fn is_own(&self) -> bool {
        self.i == self.j
    }

    pub fn key(&self) -> (String, String, String) {
        (self.store.clone(), self.i.clone(), self.j.clone())
    }
}

/// Tags attached to every record of one extraction run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunTag {
    pub fold: Option<usize>,
    pub seed: Option<u64>,
    pub replicate: Option<usize>,
}

/// Own elasticities for observed products and cross elasticities on frozen
/// edges whose both ends are observed, evaluated on the frozen graph.
pub fn extract_elasticities(model: &DemandModel, split: &[WideInstance], tag: RunTag) -> Result<Vec<ElasticityRecord>> {
    let graph = model.frozen()?;
    if graph.provenance != Provenance::Frozen {
        return Err(Error::MissingFrozenGraph);
    }
    let upcs: Vec<&str> = model.universe.products.iter().map(|p| p.upc.as_str()).collect();
    let mut out = Vec::new();
    for (inst, (surf, pt)) in split.iter().zip(model.surfaces(split, graph)?) {
        let record = |i: usize, j: usize, estimate: f64| ElasticityRecord {
            source: Source::Icdn,
            store: inst.store_code.clone(),
            i: upcs[i].to_string(),
            j: upcs[j].to_string(),
            week: Some(inst.week_id),
            fold: tag.fold,
            seed: tag.seed,
            replicate: tag.replicate,
            estimate,
            ci_lo: None,
            ci_hi: None,
        };
        for i in 0..inst.m.len() {
            if !inst.m[i] {
                continue;
            }
            out.push(record(i, i, surf.elasticity_own(&pt, i)));
            for &j in &graph.neighbors[i] {
                if inst.m[j] {
                    let e = surf.elasticity_cross(&pt, i, j).expect("frozen edge present in surface");
                    out.push(record(i, j, e));
                }
            }
        }
    }
    Ok(out)
}

/// Own and cross records of benchmark fits, with their robust intervals.
pub fn benchmark_records(fits: &[BenchmarkFit], tag: RunTag) -> Vec<ElasticityRecord> {
    let mut out = Vec::with_capacity(2 * fits.len());
    for f in fits {
        let base = ElasticityRecord {
            source: Source::Benchmark,
            store: f.store.clone(),
            i: f.i.clone(),
            j: f.i.clone(),
            week: None,
            fold: tag.fold,
            seed: tag.seed,
            replicate: tag.replicate,
            estimate: f.beta_own,
            ci_lo: Some(f.ci_own.0),
            ci_hi: Some(f.ci_own.1),
        };
        out.push(ElasticityRecord {
            j: f.j.clone(),
            estimate: f.beta_cross,
            ci_lo: Some(f.ci_cross.0),
            ci_hi: Some(f.ci_cross.1),
            ..base.clone()
        });
        out.push(base);
    }
    out
}

pub fn write_records<W: std::io::Write>(records: &[ElasticityRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("elasticity csv", e))?;
    Ok(())
}

pub fn read_records<R: std::io::Read>(reader: R) -> Result<Vec<ElasticityRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}
