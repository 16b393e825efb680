//! Experiment harness for the hybridae pipeline: configuration files, the
//! repeated hold-out protocol, reports, model files and the property self-test.

pub mod config;
pub mod error;
pub mod experiment;
pub mod persist;
pub mod report;
pub mod selftest;

pub use config::{ExperimentConfig, HessaeSection, CONFIG_VERSION};
pub use error::{HarnessError, Result};
pub use experiment::{
    compare, compare_on, run_ablation, run_ablation_on, run_experiment, run_experiment_on, run_experiment_with_models,
    AeVariant,
};
pub use persist::{load_model, save_model, ModelFile, ModelPayload, FORMAT_VERSION};
pub use report::{MethodRow, Report, ReportKind};
