//! Batch experiment driver: configuration, ε-sweeps comparing microscopic
//! and quasi-classical dynamics, invariant suites, and machine-readable
//! reports (CSV + JSON).

pub mod config;
pub mod dephasing;
pub mod invariants;
pub mod report;
pub mod sweep;

pub use config::{ExperimentConfig, InitialData};
pub use invariants::{check_invariants, InvariantEntry, InvariantReport};
pub use report::{ensemble_json, state_json, write_csv};
pub use sweep::{fit_order, prepare_branches, prepare_microscopic, run_sweep, ConvergenceReport, SweepRow};

use crate::effective::EffectiveError;
use crate::fock::FockError;
use crate::linalg::LinalgError;
use crate::measure::MeasureError;
use crate::micro::MicroError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Micro(#[from] MicroError),
    #[error(transparent)]
    Effective(#[from] EffectiveError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
