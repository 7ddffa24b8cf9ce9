//! Experiment orchestration: configuration, single runs and sweeps.

mod config;
mod engine;
mod sweep;

pub use config::{ConfigError, SimConfig, CONFIG_KEYS};
pub use engine::{
    build_topology, load_histogram, node_params, run_and_measure, run_simulation, SimOutcome,
};
pub use sweep::{run_sweep, SweepAxis, SweepPoint, SweepResult, SweepSpec, CONFIGURED_TX_RATE};

use thiserror::Error;

use crate::eventlog::LogError;
use crate::metrics::MetricError;
use crate::mining::MiningError;
use crate::netsim::NetError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Mining(#[from] MiningError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Log(#[from] LogError),
}
