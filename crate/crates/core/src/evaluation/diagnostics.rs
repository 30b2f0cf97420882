//! Stability and uncertainty comparison of surface-derived and benchmark
//! elasticities matched on (store, i, j).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::records::{ElasticityRecord, Source};
use super::score::{mean, median, sample_sd};

/// Percentile interval bounds for bootstrap CIs.
pub const CI_LEVELS: (f64, f64) = (0.025, 0.975);
/// Keys need at least this many folds for an inter-fold sd.
pub const MIN_FOLDS: usize = 3;

/// Linear-interpolation percentile of a non-empty sample, `q` in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Uncertainty summary of one key from one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyStats {
    pub point: f64,
    pub n_replicates: usize,
    pub n_folds: usize,
    pub ci: Option<(f64, f64)>,
    pub ci_width: Option<f64>,
    pub bootstrap_sd: Option<f64>,
    pub interfold_sd: Option<f64>,
    pub coverage: Option<f64>,
    pub dispersion_ratio: Option<f64>,
}

/// Collapses records to one estimate per run (fold, seed, replicate) by the
/// median over weeks, then summarizes replicates and folds.
pub fn key_stats(records: &[&ElasticityRecord]) -> KeyStats {
    let mut runs: BTreeMap<(Option<usize>, Option<u64>, Option<usize>), Vec<f64>> = BTreeMap::new();
    for r in records {
        runs.entry((r.fold, r.seed, r.replicate)).or_default().push(r.estimate);
    }
    let mut replicates = Vec::new();
    let mut by_fold: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut all = Vec::new();
    for ((fold, _, replicate), values) in &runs {
        let est = median(values).expect("non-empty run");
        all.push(est);
        match (replicate, fold) {
            (Some(_), _) => replicates.push(est),
            (None, Some(f)) => by_fold.entry(*f).or_default().push(est),
            (None, None) => {}
        }
    }
    // seeds within a fold are averaged into the fold estimate
    let folds: Vec<f64> = by_fold.values().map(|v| mean(v)).collect();
    let point = if !folds.is_empty() {
        median(&folds)
    } else {
        median(&all)
    }
    .expect("non-empty key");

    let ci = (!replicates.is_empty()).then(|| (percentile(&replicates, CI_LEVELS.0), percentile(&replicates, CI_LEVELS.1)));
    let bootstrap_sd = (replicates.len() >= 2).then(|| sample_sd(&replicates));
    let interfold_sd = (folds.len() >= MIN_FOLDS).then(|| sample_sd(&folds));
    let coverage = match ci {
        Some((lo, hi)) if !folds.is_empty() => {
            Some(folds.iter().filter(|f| (lo..=hi).contains(*f)).count() as f64 / folds.len() as f64)
        }
        _ => None,
    };
    let dispersion_ratio = match (bootstrap_sd, interfold_sd) {
        (Some(b), Some(f)) if f > 0.0 => Some(b / f),
        _ => None,
    };
    KeyStats {
        point,
        n_replicates: replicates.len(),
        n_folds: folds.len(),
        ci,
        ci_width: ci.map(|(lo, hi)| hi - lo),
        bootstrap_sd,
        interfold_sd,
        coverage,
        dispersion_ratio,
    }
}

/// 1 when `a < b`, 0.5 on exact ties, 0 otherwise.
fn win(a: f64, b: f64) -> f64 {
    if a < b {
        1.0
    } else if a == b {
        0.5
    } else {
        0.0
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyComparison {
    pub store: String,
    pub i: String,
    pub j: String,
    pub icdn: KeyStats,
    pub benchmark: KeyStats,
    pub same_sign: bool,
    /// Win credits for the surface estimate; `None` when either side lacks
    /// the statistic.
    pub narrower_ci: Option<f64>,
    pub lower_sd: Option<f64>,
    pub more_fold_stable: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SignShares {
    pub negative: f64,
    pub zero: f64,
    pub positive: f64,
}

fn sign_shares(points: &[f64]) -> SignShares {
    if points.is_empty() {
        return SignShares::default();
    }
    let n = points.len() as f64;
    let count = |s: i8| points.iter().filter(|p| sign(**p) == s).count() as f64 / n;
    SignShares {
        negative: count(-1),
        zero: count(0),
        positive: count(1),
    }
}

/// Mean of the present values and how many there were.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub value: Option<f64>,
    pub n: usize,
}

impl Rate {
    fn of(values: impl IntoIterator<Item = Option<f64>>) -> Rate {
        let v: Vec<f64> = values.into_iter().flatten().collect();
        Rate {
            value: (!v.is_empty()).then(|| mean(&v)),
            n: v.len(),
        }
    }
}

/// Aggregates over one population of matched keys (own or cross).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_keys: usize,
    pub same_sign_rate: Option<f64>,
    pub icdn_signs: SignShares,
    pub benchmark_signs: SignShares,
    pub narrower_ci_rate: Rate,
    pub lower_sd_rate: Rate,
    pub more_fold_stable_rate: Rate,
    pub icdn_median_ci_width: Option<f64>,
    pub benchmark_median_ci_width: Option<f64>,
    pub icdn_coverage: Rate,
    pub benchmark_coverage: Rate,
    pub icdn_dispersion_ratio: Rate,
    pub benchmark_dispersion_ratio: Rate,
}

fn aggregate(keys: &[&KeyComparison]) -> Aggregate {
    let pts = |f: fn(&KeyComparison) -> f64| keys.iter().map(|k| f(k)).collect::<Vec<_>>();
    let widths = |f: fn(&KeyComparison) -> Option<f64>| median(&keys.iter().filter_map(|k| f(k)).collect::<Vec<_>>());
    Aggregate {
        n_keys: keys.len(),
        same_sign_rate: (!keys.is_empty())
            .then(|| keys.iter().filter(|k| k.same_sign).count() as f64 / keys.len() as f64),
        icdn_signs: sign_shares(&pts(|k| k.icdn.point)),
        benchmark_signs: sign_shares(&pts(|k| k.benchmark.point)),
        narrower_ci_rate: Rate::of(keys.iter().map(|k| k.narrower_ci)),
        lower_sd_rate: Rate::of(keys.iter().map(|k| k.lower_sd)),
        more_fold_stable_rate: Rate::of(keys.iter().map(|k| k.more_fold_stable)),
        icdn_median_ci_width: widths(|k| k.icdn.ci_width),
        benchmark_median_ci_width: widths(|k| k.benchmark.ci_width),
        icdn_coverage: Rate::of(keys.iter().map(|k| k.icdn.coverage)),
        benchmark_coverage: Rate::of(keys.iter().map(|k| k.benchmark.coverage)),
        icdn_dispersion_ratio: Rate::of(keys.iter().map(|k| k.icdn.dispersion_ratio)),
        benchmark_dispersion_ratio: Rate::of(keys.iter().map(|k| k.benchmark.dispersion_ratio)),
    }
}

/// Validation fit of both methods on one (store, UPC, fold) triplet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub store: String,
    pub upc: String,
    pub fold: usize,
    pub icdn: [f64; 3],
    pub benchmark: [f64; 3],
}

/// Descriptive paired summary of `icdn - benchmark` differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedSummary {
    pub n: usize,
    pub mean_delta: f64,
    pub median_delta: f64,
    pub sd_delta: f64,
    pub t_stat: Option<f64>,
    /// Signed-rank sums over nonzero differences, average ranks for ties.
    pub w_plus: f64,
    pub w_minus: f64,
    pub z_signed_rank: Option<f64>,
}

pub fn paired_summary(deltas: &[f64]) -> Option<PairedSummary> {
    if deltas.is_empty() {
        return None;
    }
    let n = deltas.len();
    let sd = sample_sd(deltas);
    let m = mean(deltas);
    let t_stat = (n >= 2 && sd > 0.0).then(|| m / (sd / (n as f64).sqrt()));

    let mut nz: Vec<f64> = deltas.iter().copied().filter(|d| *d != 0.0).collect();
    nz.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let (mut w_plus, mut w_minus) = (0.0, 0.0);
    let mut k = 0;
    while k < nz.len() {
        let mut e = k;
        while e + 1 < nz.len() && nz[e + 1].abs() == nz[k].abs() {
            e += 1;
        }
        let rank = (k + e) as f64 / 2.0 + 1.0;
        for d in &nz[k..=e] {
            if *d > 0.0 {
                w_plus += rank;
            } else {
                w_minus += rank;
            }
        }
        k = e + 1;
    }
    let nr = nz.len() as f64;
    let var = nr * (nr + 1.0) * (2.0 * nr + 1.0) / 24.0;
    let z_signed_rank = (var > 0.0).then(|| (w_plus - nr * (nr + 1.0) / 4.0) / var.sqrt());
    Some(PairedSummary {
        n,
        mean_delta: m,
        median_delta: median(deltas).expect("non-empty"),
        sd_delta: sd,
        t_stat,
        w_plus,
        w_minus,
        z_signed_rank,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparisons {
    pub triplets: usize,
    pub folds: usize,
    pub r2_triplet: Option<PairedSummary>,
    pub mae_triplet: Option<PairedSummary>,
    pub rmse_triplet: Option<PairedSummary>,
    /// Per-fold means of each metric, paired across folds.
    pub r2_fold: Option<PairedSummary>,
    pub mae_fold: Option<PairedSummary>,
    pub rmse_fold: Option<PairedSummary>,
}

fn paired_comparisons(pairs: &[MetricPair]) -> PairedComparisons {
    let delta = |p: &MetricPair, m: usize| p.icdn[m] - p.benchmark[m];
    let by_triplet = |m: usize| {
        let d: Vec<f64> = pairs.iter().map(|p| delta(p, m)).filter(|d| d.is_finite()).collect();
        paired_summary(&d)
    };
    let mut folds: BTreeMap<usize, Vec<&MetricPair>> = BTreeMap::new();
    for p in pairs {
        folds.entry(p.fold).or_default().push(p);
    }
    let by_fold = |m: usize| {
        let d: Vec<f64> = folds
            .values()
            .filter_map(|ps| {
                let v: Vec<f64> = ps.iter().map(|p| delta(p, m)).filter(|d| d.is_finite()).collect();
                (!v.is_empty()).then(|| mean(&v))
            })
            .collect();
        paired_summary(&d)
    };
    PairedComparisons {
        triplets: pairs.len(),
        folds: folds.len(),
        r2_triplet: by_triplet(0),
        mae_triplet: by_triplet(1),
        rmse_triplet: by_triplet(2),
        r2_fold: by_fold(0),
        mae_fold: by_fold(1),
        rmse_fold: by_fold(2),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub matched_keys: usize,
    pub unmatched_icdn_keys: usize,
    pub unmatched_benchmark_keys: usize,
    pub own: Aggregate,
    pub cross: Aggregate,
    pub all: Aggregate,
    pub paired: PairedComparisons,
    pub keys: Vec<KeyComparison>,
    pub warnings: Vec<String>,
}

type Key = (String, String, String);

fn group(records: &[ElasticityRecord], source: Source) -> BTreeMap<Key, Vec<&ElasticityRecord>> {
    let mut out: BTreeMap<Key, Vec<&ElasticityRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.source == source) {
        out.entry(r.key()).or_default().push(r);
    }
    out
}

/// Compares the two record populations on keys present in both.
pub fn stability_diagnostics(
    icdn: &[ElasticityRecord],
    benchmark: &[ElasticityRecord],
    metric_pairs: &[MetricPair],
) -> DiagnosticsReport {
    let a = group(icdn, Source::Icdn);
    let b = group(benchmark, Source::Benchmark);
    let mut keys = Vec::new();
    for (key, ra) in &a {
        let Some(rb) = b.get(key) else { continue };
        let sa = key_stats(ra);
        let sb = key_stats(rb);
        let both = |f: fn(&KeyStats) -> Option<f64>| match (f(&sa), f(&sb)) {
            (Some(x), Some(y)) => Some(win(x, y)),
            _ => None,
        };
        keys.push(KeyComparison {
            store: key.0.clone(),
            i: key.1.clone(),
            j: key.2.clone(),
            same_sign: sign(sa.point) == sign(sb.point),
            narrower_ci: both(|s| s.ci_width),
            lower_sd: both(|s| s.bootstrap_sd),
            more_fold_stable: both(|s| s.interfold_sd),
            icdn: sa,
            benchmark: sb,
        });
    }
    let mut warnings = Vec::new();
    if keys.is_empty() {
        let msg = "no (store, i, j) keys are present in both sources; report is empty".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let own: Vec<&KeyComparison> = keys.iter().filter(|k| k.i == k.j).collect();
    let cross: Vec<&KeyComparison> = keys.iter().filter(|k| k.i != k.j).collect();
    let all: Vec<&KeyComparison> = keys.iter().collect();
    DiagnosticsReport {
        matched_keys: keys.len(),
        unmatched_icdn_keys: a.keys().filter(|k| !b.contains_key(*k)).count(),
        unmatched_benchmark_keys: b.keys().filter(|k| !a.contains_key(*k)).count(),
        own: aggregate(&own),
        cross: aggregate(&cross),
        all: aggregate(&all),
        paired: paired_comparisons(metric_pairs),
        keys,
        warnings,
    }
}
