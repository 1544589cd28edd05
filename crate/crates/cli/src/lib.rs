//! Command implementations behind the `parity-forecast` binary.

pub mod commands;
pub mod config;

pub use config::ExperimentConfig;

/// Crate version followed by the `git describe` of the build.
pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("PARITY_FORECAST_GIT_DESCRIBE"), ")");

pub fn version_string() -> String {
    format!("parity-forecast {VERSION}")
}
