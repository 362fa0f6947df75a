//! Config-driven scenario runner for the pairing diagnostics in `nls-core`.
//!
//! A run echoes its effective configuration, writes the diagnostic series
//! and auxiliary tables, and derives `summary.json` from those files alone.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod report;
pub mod runner;
pub mod summary;

pub use config::{parse_config, serialize_config, Scenario, ScenarioConfig};
pub use runner::{run_scenario, RunOptions, RunResult};
pub use summary::{summarize, Summary};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] nls_core::Error),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed data: {0}")]
    Format(String),
    #[error("thread pool: {0}")]
    Pool(String),
}
