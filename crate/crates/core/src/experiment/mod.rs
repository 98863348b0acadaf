//! Configuration-driven sweeps comparing vanilla and adamized descent, and
//! the reports built from their fronts.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{ExperimentConfig, ProblemConfig, SynthDataConfig};
pub use report::{compare_report, export_front, metrics_report, MetricsReport};
pub use runner::{run_experiment, ExperimentSummary, RunManifest};
