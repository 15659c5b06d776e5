//! Experiment campaigns over the simulator with a persistent results store.

mod campaigns;
mod runner;
mod sensitivity;
mod store;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, PolicySet};
use crate::metrics::MetricsError;
use crate::optimizer::OptimizerError;
use crate::sim::SimError;
use crate::stats::StatsError;

pub use campaigns::{
    grid_campaign, optimizer_campaign, policy_sweep, table10_csv, GridCampaign, GridReference, GridRow, OptimizerRow,
    PolicyCell, PolicySweep, EV_LEVELS,
};
pub use runner::{run_jobs, Job, RunOptions};
pub use sensitivity::{apply_factor, simulator_factors, sobol_campaign, SOBOL_OUTPUTS};
pub use store::{RecordKey, ResultRecord, ResultsStore, INDEX_FILE, RESULTS_FILE, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {source}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("scenario hash {0} is shared by two different configurations")]
    HashCollision(String),
    #[error("unknown policy case {0}; cases are 0 to 5")]
    UnknownCase(u8),
    #[error("unknown factor {0:?}")]
    UnknownFactor(String),
    #[error("no full-grid reference: {0}")]
    MissingGrid(String),
    #[error("{0}")]
    Invalid(String),
}

impl ExperimentError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ExperimentError::Io { path: path.into(), source }
    }
}

/// One of the six policy combinations, from no intervention (0) to all
/// four policies (5).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct PolicyCase(u8);

impl PolicyCase {
    pub const ALL: [PolicyCase; 6] = [
        PolicyCase(0),
        PolicyCase(1),
        PolicyCase(2),
        PolicyCase(3),
        PolicyCase(4),
        PolicyCase(5),
    ];

    pub fn new(id: u8) -> Result<Self, ExperimentError> {
        if id <= 5 {
            Ok(PolicyCase(id))
        } else {
            Err(ExperimentError::UnknownCase(id))
        }
    }

    pub fn id(self) -> u8 {
        self.0
    }

    /// `(ban_gasoline, idle_fee, relocate_full, notification)`.
    pub fn flags(self) -> (bool, bool, bool, bool) {
        match self.0 {
            0 => (false, false, false, false),
            1 => (true, false, false, false),
            2 => (true, true, false, false),
            3 => (true, true, true, false),
            4 => (true, true, false, true),
            _ => (true, true, true, true),
        }
    }

    /// `base` with this case's four flags; rates and grace periods are kept.
    pub fn apply(self, base: &PolicySet) -> PolicySet {
        let (ban, fee, relocate, notify) = self.flags();
        PolicySet { ban_gasoline: ban, idle_fee: fee, relocate_full: relocate, notification: notify, ..base.clone() }
    }
}

impl TryFrom<u8> for PolicyCase {
    type Error = ExperimentError;

    fn try_from(id: u8) -> Result<Self, Self::Error> {
        PolicyCase::new(id)
    }
}

impl From<PolicyCase> for u8 {
    fn from(c: PolicyCase) -> u8 {
        c.0
    }
}

impl std::fmt::Display for PolicyCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "case {}", self.0)
    }
}
