//! Experiment harness: configuration, datasets, the scheme runner and its
//! reports.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod report;

pub use config::{LinkConfig, Mode, Scheme};
pub use dataset::{load_image, synth_dataset};
pub use experiment::{prepare_models, run_experiment, Models, RunOptions, RunOutput};
pub use report::{emit_csv, emit_summary, ResultRow, SummaryRow, TraceRecord};
