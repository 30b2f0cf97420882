//! Fit metrics, elasticity scores, trial selection, temporal folds, block
//! bootstrap, the pairwise log-log OLS benchmark and stability diagnostics.

pub mod benchmark;
pub mod diagnostics;
pub mod folds;
pub mod harness;
pub mod metrics;
pub mod records;
pub mod score;

pub use benchmark::{benchmark_fit, ols_hc1, pairwise_rows, run_benchmark, BenchmarkFit, OlsFit, SkipReason, Skipped};
pub use diagnostics::{paired_summary, percentile, stability_diagnostics, DiagnosticsReport, MetricPair};
pub use harness::{evaluate_panel, EvalConfig, EvaluationOutput, EvaluationReport};
pub use folds::{block_bootstrap, make_folds, FoldPlan};
pub use metrics::{masked_mae_rmse, masked_r2, split_metrics, FitMetrics};
pub use records::{benchmark_records, extract_elasticities, read_records, write_records, ElasticityRecord, RunTag, Source};
pub use score::{elasticity_score, robust_aggregate, select_trial, ElasticityScore, Evaluation, TrialSummary};
