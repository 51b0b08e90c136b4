//! `nlselab`: configuration parsing, command dispatch and deterministic
//! run orchestration for the midpoint-rule NLSE laboratory.

pub mod config;
pub mod runner;

pub use config::{parse_config, Command, ConfigError, RunConfig};
pub use runner::{run, RunError, RunOutput};
