//! Experiment runner and CLI plumbing for `saddlemax`: model registry, experiment configs,
//! convergence sweeps, Monte-Carlo sampling, grid posteriors and saddlepoint-vs-CLT tables.

pub mod config;
pub mod experiments;
pub mod registry;
pub mod report;

pub use config::{ExperimentConfig, ExperimentKind, ReferenceSource};
pub use experiments::{
    fit_slope, run_converge, run_posterior, run_sample, run_spa_vs_clt, ConvergeOutput, ConvergenceRow,
    PosteriorOutput, PosteriorSummary, SampleOutput, SampleSummary, SlopeFit, SpaCltOutput, SpaCltRow,
};
pub use registry::{build_model, parse_list, parse_params, ModelEntry, MODEL_IDS};
pub use report::{write_report, Table};

use saddlemax_core::SaddleError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] SaddleError),
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{failed} of {total} replicates failed (limit 1%)")]
    TooManyFailures { failed: usize, total: usize },
}
