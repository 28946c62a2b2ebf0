//! End-to-end experiment orchestration: materialize datasets, plan
//! folds, tune, train, predict, correlate, and write deterministic
//! outputs under a run manifest.

pub mod config;
pub mod experiment;
pub mod manifest;
pub mod plot;

pub use config::{BaselineSection, DatasetSource, ExperimentConfig, QeSection, SynthSection};
pub use experiment::{run_experiment, write_predictions, RunOutcome};
pub use manifest::{sha256_file, RunManifest, RunStatus};
pub use plot::plot_gold_vs_predicted;
