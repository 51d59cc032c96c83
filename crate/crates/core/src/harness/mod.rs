//! Experiment orchestration: configuration, seeded trials, pipelines and
//! exports.

pub mod config;
pub mod export;
pub mod pipeline;

pub use config::{ActiveConfig, DatasetConfig, ExperimentConfig, Method};
pub use export::{export_active, export_experiment, write_bench_csv, write_heatmap_csv, write_json, write_trials_csv};
pub use pipeline::{
    bench, certify, load_dataset, run_active, run_active_on, run_experiment, run_experiment_on, run_method,
    sample_labels, sample_uniform_labels, score_heatmap, trial_rng, ActiveSummary, ActiveTrial, BenchRow,
    CertifyReport, CurvePoint, Dataset, MethodOutput, Summary, TrialResult,
};
