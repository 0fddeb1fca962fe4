//! Experiment orchestration: configuration, dataset loading, the round
//! loop with early stopping, run artifacts and run comparison.

mod config;
mod dataset;
mod run;
mod summary;

pub use config::{ExperimentConfig, Strategy};
pub use dataset::{fingerprint, Federation};
pub use run::{run_experiment, run_observed, run_on, Models, RoundEvent, RoundState, RunOutput};
pub use summary::{compare_runs, read_tables, write_run_dir, Comparison, RunRecord, RunSummary};
