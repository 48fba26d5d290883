//! Server-side logic: TimelyFL time estimation and workload scheduling, the
//! FedAvg and FedOpt aggregators, and FedBuff's buffered admission.

mod aggregate;
mod fedbuff;
mod schedule;

pub use aggregate::{
    aggregate_fedavg, aggregate_fedopt, AggregatorKind, AggregatorState, ServerOptimizer,
};
pub use fedbuff::{fedbuff_admit, staleness_weight, Admission, BuffServerState};
pub use schedule::{
    aggregation_interval, local_time_update, ratio_to_mask, ratio_to_suffix_start, utility_lhs,
    workload_schedule, Schedule, TimeEstimate,
};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Synchronous rounds that wait for the whole cohort.
    Sync,
    /// Buffered asynchronous aggregation with a fixed aggregation goal.
    FedBuff,
    /// Deadline-driven rounds with adaptive epochs and partial training.
    TimelyFl,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Sync, Protocol::FedBuff, Protocol::TimelyFl];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Sync => "sync",
            Protocol::FedBuff => "fedbuff",
            Protocol::TimelyFl => "timelyfl",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Protocol {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "sync" | "syncfl" => Ok(Protocol::Sync),
            "fedbuff" => Ok(Protocol::FedBuff),
            "timelyfl" => Ok(Protocol::TimelyFl),
            other => Err(crate::Error::Validation(format!(
                "unknown protocol `{other}`"
            ))),
        }
    }
}
