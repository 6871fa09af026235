//! Benchmark runner behind the `armbench` binary.

pub mod bench;
pub mod cli;
pub mod config;
pub mod io;
pub mod report;

use std::path::PathBuf;

use crate::camera::CameraError;
use crate::compat::CompatError;
use crate::image::ImageError;
use crate::simbench::SimError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("cannot parse {0}: {1}")]
    Parse(PathBuf, String),
    #[error("invalid model {0}: {1}")]
    Model(PathBuf, String),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("calibration failed: {0}")]
    Calibration(#[from] CameraError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Compat(#[from] CompatError),
    #[error("no runs found under {0}")]
    MissingRuns(PathBuf),
    #[error("{0}: recomputed metrics differ from the summary ({1})")]
    Inconsistent(String, String),
}
