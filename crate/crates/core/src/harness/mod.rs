//! Experiment runner: configuration, orchestration and CSV telemetry.

pub mod config;
pub mod csv;
pub mod experiment;

pub use config::{parse_config, parse_invocation, GammaSpec, Invocation, RunConfig, X0Spec};
pub use csv::{read_csv, write_csv};
pub use experiment::{run_experiment, ExperimentOutcome, Summary};
