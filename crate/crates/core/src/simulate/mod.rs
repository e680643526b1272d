//! Synthetic data and the seeded Monte Carlo engine.

mod config;
mod experiment;
mod generators;
mod report;
mod streams;

pub use config::{data_seed, Preset, PRESET_ROWS};
pub use experiment::{
    loglog_slope, mse_slope, run_experiment, run_records, run_replication, summarize, CellSummary, EqualSummary,
    ExperimentConfig, ExperimentReport, ExperimentRun, Flag, FlagCounts, IpwOutcome, IpwSummary, ReplicationRecord,
    ReplicationSetup, SlopeFit, Weighting,
};
pub use generators::{
    ar_covariance, generate_linear, generate_logistic, GeneratorKind, GeneratorSpec, DEFAULT_COEFFICIENTS,
    N_COVARIATES,
};
pub use report::{report_header, write_points_csv, write_report_csv, write_slopes_csv};
pub use streams::stream_rng;
