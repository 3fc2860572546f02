//! Batch driver for the damping-channel experiments: run configuration,
//! figure pipelines and result files.

pub mod config;
pub mod error;
pub mod output;
pub mod run;
pub mod svg;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use output::{emit_outputs, load_run};
pub use run::{run_fig2, run_fig3, ExperimentRun, ResultRow};
