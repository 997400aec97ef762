//! Experiment driver for `pinn-core`.
//!
//! An experiment is a TOML file (or a built-in preset) naming a problem, the
//! model variants and architectures to train, the optimiser settings and the
//! diagnostics to record. [`run_experiment`] expands it into runs, trains each
//! one and writes CSV artifacts, checkpoints and a hashed manifest.

pub mod config;
pub mod error;
pub mod experiment;
pub mod manifest;
pub mod presets;
pub mod score;

pub use config::{ExperimentConfig, Kind, RunPlan};
pub use error::{CliError, CliResult, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK};
pub use experiment::{run_experiment, ExperimentOutcome, RunOutcome};
pub use manifest::{Manifest, MANIFEST_FILE};
pub use score::score;
