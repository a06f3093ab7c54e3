//! Driver behind the `helm-absorb` binary: configuration, run modes and
//! output files.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

pub mod config;
pub mod run;

pub use config::{ChiConfig, Mode, RunConfig};
pub use run::{builtin_chi0, run, RunReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] helm_absorb_core::Error),

    #[error("configuration: {0}")]
    Config(String),

    #[error("i/o error on {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
