//! Command-line driver and HTTP tool service.

pub mod commands;
pub mod config;
pub mod service;

pub use commands::{exit_code, run, Cli, Command, RUN_SEPARATOR};
pub use config::{Config, ConfigError};
