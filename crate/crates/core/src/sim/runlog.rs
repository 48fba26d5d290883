use std::fmt::Write as _;

use crate::model::LayeredModel;
use crate::protocol::Protocol;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskOutcome {
    /// Consumed by an aggregation.
    Aggregated,
    /// Missed the TimelyFL deadline.
    LateDropped,
    /// Exceeded FedBuff's staleness cap.
    StaleDiscarded,
    /// Still training or buffered when the run ended.
    Pending,
}

impl TaskOutcome {
    pub fn name(self) -> &'static str {
        match self {
            TaskOutcome::Aggregated => "aggregated",
            TaskOutcome::LateDropped => "late",
            TaskOutcome::StaleDiscarded => "stale",
            TaskOutcome::Pending => "pending",
        }
    }
}

/// One client task as it fed into (or missed) an aggregation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Assignment {
    pub client_id: usize,
    pub epochs: usize,
    /// Requested training ratio (1 outside TimelyFL).
    pub ratio: f64,
    /// Parameter fraction actually trained after mapping the ratio onto layers.
    pub trained_fraction: f64,
    pub staleness: u64,
    pub outcome: TaskOutcome,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregationRecord {
    /// 0 for the initial evaluation, then 1, 2, ... per aggregation.
    pub round: u64,
    pub time_s: f64,
    pub eval: Option<Evaluation>,
    /// Distinct clients whose updates were aggregated, ascending.
    pub participants: Vec<usize>,
    pub assignments: Vec<Assignment>,
    /// TimelyFL aggregation interval for the round.
    pub interval_s: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OutcomeCounts {
    pub spawned: u64,
    pub aggregated: u64,
    pub late_dropped: u64,
    pub stale_discarded: u64,
    pub pending: u64,
}

impl OutcomeCounts {
    pub fn record(&mut self, outcome: TaskOutcome) {
        match outcome {
            TaskOutcome::Aggregated => self.aggregated += 1,
            TaskOutcome::LateDropped => self.late_dropped += 1,
            TaskOutcome::StaleDiscarded => self.stale_discarded += 1,
            TaskOutcome::Pending => self.pending += 1,
        }
    }

    pub fn resolved(&self) -> u64 {
        self.aggregated + self.late_dropped + self.stale_discarded + self.pending
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunLog {
    pub protocol: Protocol,
    pub population_size: usize,
    pub records: Vec<AggregationRecord>,
    /// Client-side tally: how many aggregations consumed one of each client's updates.
    pub client_contributions: Vec<u64>,
    pub outcomes: OutcomeCounts,
    pub final_model: LayeredModel,
}

impl RunLog {
    pub fn aggregation_count(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn aggregations(&self) -> &[AggregationRecord] {
        self.records.get(1..).unwrap_or(&[])
    }

    /// `(time_s, accuracy, loss)` for every evaluated record.
    pub fn curve(&self) -> Vec<(f64, f64, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.eval.map(|e| (r.time_s, e.accuracy, e.loss)))
            .collect()
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.records
            .iter()
            .rev()
            .find_map(|r| r.eval.map(|e| e.accuracy))
    }

    pub fn final_time(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.time_s)
    }

    /// `time_s,round,accuracy,loss,n_participants`; unevaluated rows leave
    /// accuracy and loss empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,round,accuracy,loss,n_participants\n");
        for r in &self.records {
            let (acc, loss) = match r.eval {
                Some(e) => (e.accuracy.to_string(), e.loss.to_string()),
                None => (String::new(), String::new()),
            };
            writeln!(
                out,
                "{},{},{},{},{}",
                r.time_s,
                r.round,
                acc,
                loss,
                r.participants.len()
            )
            .unwrap();
        }
        out
    }

    /// `round,client_id,epochs,ratio,trained_fraction,staleness,outcome`
    pub fn assignments_csv(&self) -> String {
        let mut out =
            String::from("round,client_id,epochs,ratio,trained_fraction,staleness,outcome\n");
        for r in &self.records {
            for a in &r.assignments {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.round,
                    a.client_id,
                    a.epochs,
                    a.ratio,
                    a.trained_fraction,
                    a.staleness,
                    a.outcome.name()
                )
                .unwrap();
            }
        }
        out
    }
}
