//! Command-line driver for `rpmd-core`: scenario configs, CSV traces, run
//! summaries and the `run` / `analyze` / `selftest` commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod scenario;
pub mod trace_io;

pub use config::{Preset, ScenarioConfig};
pub use error::{CliError, ExitStatus};
pub use scenario::Scenario;
