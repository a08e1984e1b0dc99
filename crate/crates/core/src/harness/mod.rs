//! Experiment engine: labeling, paired sampler comparisons, detection statistics and
//! critical-step maps over batches of trajectories.

mod detection;
pub mod export;
mod labels;
mod metrics;
mod runner;

pub use detection::{
    critical_step_map, detection_report, exact_thresholds, median_critical_index, roc_sweep, Confusion,
    DetectionReport, DetectionSample, RocCurve, RocPoint,
};
pub use labels::{label_endpoint, LabelRule, MIN_CALIBRATION_DRAWS};
pub use metrics::{
    compare_records, label_records, run_metrics, run_paired_experiment, ChainComparison, PairedBreakdown,
    PairedExperiment, PairedOutcome, RunMetrics,
};
pub use runner::{chain_init, chain_inits, chain_seed, run_chains};
