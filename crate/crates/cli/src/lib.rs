//! Command-line orchestration of the explainer-evaluation pipeline: dataset
//! generation, pretraining, explanation, GInX curves, fidelity, and reports.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod plotdata;
pub mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::Context;
pub use config::{ConfigError, Overrides, RunConfig};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "GINX_OUT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("missing {}; run `ginx {command}` first", path.display())]
    MissingArtifact { path: PathBuf, command: &'static str },
    #[error("{} is corrupt: {msg}", path.display())]
    Corrupt { path: PathBuf, msg: String },
    #[error("{} was computed on dataset {found}, expected {expected}", path.display())]
    DatasetMismatch { path: PathBuf, expected: String, found: String },
    #[error("nothing to report in {}; run `ginx ginx-eval` or `ginx fidelity` first", .0.display())]
    NothingToReport(PathBuf),
    #[error(transparent)]
    Synth(#[from] ginx_core::synthgen::SynthError),
    #[error("dataset file: {0}")]
    Format(#[from] ginx_core::synthgen::FormatError),
    #[error("dataset: {0}")]
    Dataset(#[from] ginx_core::graph::DatasetError),
    #[error(transparent)]
    Gnn(#[from] ginx_core::gnn::GnnError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] ginx_core::gnn::CheckpointError),
    #[error(transparent)]
    Explain(#[from] ginx_core::explain::ExplainError),
    #[error("mask file: {0}")]
    Masks(#[from] ginx_core::explain::MaskFormatError),
    #[error(transparent)]
    Eval(#[from] ginx_core::eval::EvalError),
}
