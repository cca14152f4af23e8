//! Synthetic distribution-shift benchmark.
//!
//! [`gen_scenario`] builds the data, [`train_pair`] the two models and
//! [`run_benchmark`] scores merging methods on every setting. [`diag`] holds
//! the quadrant and correlation diagnostics.

mod corrupt;
pub mod diag;
mod metrics;
mod report;
mod scenario;

pub use corrupt::{corrupt, CorruptionKind, CorruptionSpec, SEVERITIES};
pub use diag::{quadrant_analysis, quadrant_analysis_pooled, Quadrant, QuadrantReport};
pub use metrics::{
    corruption_error, lambda_histogram, mean_over_shifts, pearson, top1_accuracy, Histogram,
    LambdaStats, HISTOGRAM_BINS,
};
pub use report::{
    run_benchmark, setting, test_sets, to_canonical_json, BenchConfig, BenchmarkReport,
    EvalReport, MethodSpec, DEFAULT_MIXUP_ALPHA, DEFAULT_SLERP_T, DEFAULT_TASK_ARITH_SCALE,
    DEFAULT_TIES_K, DEFAULT_TIES_SCALE,
};
pub use scenario::{
    corruption_specs, files, gen_scenario, load_pair, save_pair, train_pair, CorruptedSet,
    ScenarioParams, ShiftScenario, PINNED_PARAMS_JSON, PINNED_SEED,
};

