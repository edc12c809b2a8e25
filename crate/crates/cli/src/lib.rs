//! Batch command-line surface: scenario configs, run directories, sweeps
//! and the `topology`, `simulate`, `hunt` and `validate` commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod rundir;
pub mod sweep;

pub use commands::{cmd_hunt, cmd_simulate, cmd_topology, cmd_validate, parse_detectors, Invocation};
pub use config::{DataSource, Diagnostic, LoadedConfig, ScenarioConfig};
pub use error::{CliError, CliResult};
