//! Command line front end and decision service for `curveroute`.

pub mod commands;
pub mod config;
pub mod error;
pub mod service;

pub use config::AppConfig;
pub use error::CliError;
