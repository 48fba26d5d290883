//! Participation rates, time-to-target and protocol comparison tables.

use std::fmt::Write as _;

use crate::sim::RunLog;

#[derive(Clone, Debug, PartialEq)]
pub struct ParticipationReport {
    /// Indexed by client id; covers every client in the population.
    pub contributions: Vec<u64>,
    pub per_client_rate: Vec<f64>,
    pub total_aggregations: usize,
    pub mean_rate: f64,
    /// Ten buckets of width 0.1; a rate of exactly 1 lands in the last one.
    pub histogram: [usize; 10],
}

impl ParticipationReport {
    /// `client_id,contributions,total_aggs,rate`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("client_id,contributions,total_aggs,rate\n");
        for (c, (n, r)) in self
            .contributions
            .iter()
            .zip(&self.per_client_rate)
            .enumerate()
        {
            writeln!(out, "{c},{n},{},{r}", self.total_aggregations).unwrap();
        }
        out
    }
}

/// Rate of a client = aggregations that consumed one of its updates divided by
/// all aggregations. Counted from the server's participant sets.
pub fn participation(log: &RunLog, population_size: usize) -> ParticipationReport {
    let mut contributions = vec![0u64; population_size];
    for record in log.aggregations() {
        for &c in &record.participants {
            contributions[c] += 1;
        }
    }
    let total = log.aggregation_count();
    let per_client_rate: Vec<f64> = contributions
        .iter()
        .map(|&n| {
            if total == 0 {
                0.0
            } else {
                n as f64 / total as f64
            }
        })
        .collect();
    let mut histogram = [0usize; 10];
    for &r in &per_client_rate {
        histogram[((r * 10.0).floor() as usize).min(9)] += 1;
    }
    let mean_rate = if population_size == 0 {
        0.0
    } else {
        per_client_rate.iter().sum::<f64>() / population_size as f64
    };
    ParticipationReport {
        contributions,
        per_client_rate,
        total_aggregations: total,
        mean_rate,
        histogram,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    /// Reached once accuracy >= value.
    Accuracy(f64),
    /// Reached once loss <= value.
    Loss(f64),
}

impl Target {
    fn met(self, accuracy: f64, loss: f64) -> bool {
        match self {
            Target::Accuracy(t) => accuracy >= t,
            Target::Loss(t) => loss <= t,
        }
    }

    pub fn label(self) -> String {
        match self {
            Target::Accuracy(t) => format!("acc>={t}"),
            Target::Loss(t) => format!("loss<={t}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeToTarget {
    pub target: Target,
    /// `None` when the target was never met.
    pub time_s: Option<f64>,
}

/// Earliest evaluated record meeting `target`.
pub fn time_to_target(log: &RunLog, target: Target) -> TimeToTarget {
    time_to_target_on_curve(&log.curve(), target)
}

/// Same as [`time_to_target`] over raw `(time_s, accuracy, loss)` points.
pub fn time_to_target_on_curve(curve: &[(f64, f64, f64)], target: Target) -> TimeToTarget {
    TimeToTarget {
        target,
        time_s: curve
            .iter()
            .find(|(_, a, l)| target.met(*a, *l))
            .map(|p| p.0),
    }
}

/// `time_s,accuracy,loss` for each evaluated record.
pub fn curve_csv(log: &RunLog) -> String {
    let mut out = String::from("time_s,accuracy,loss\n");
    for (t, a, l) in log.curve() {
        writeln!(out, "{t},{a},{l}").unwrap();
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub strategy: String,
    pub target: Target,
    pub time_s: Option<f64>,
    /// Time relative to the fastest strategy that reached the target.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub const NOT_REACHED: &str = "not_reached";

impl ComparisonTable {
    pub fn row(&self, strategy: &str, target: Target) -> Option<&ComparisonRow> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.target == target)
    }

    /// `strategy,target,time_s,ratio`; ratios to two decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,target,time_s,ratio\n");
        for r in &self.rows {
            let time = r.time_s.map_or(NOT_REACHED.to_string(), |t| t.to_string());
            let ratio = r
                .ratio
                .map_or(NOT_REACHED.to_string(), |x| format!("{x:.2}"));
            writeln!(out, "{},{},{time},{ratio}", r.strategy, r.target.label()).unwrap();
        }
        out
    }
}

/// Per target, each strategy's time-to-target and its ratio against the
/// fastest strategy.
pub fn compare(times: &[(String, Vec<TimeToTarget>)]) -> ComparisonTable {
    let mut rows = Vec::new();
    let targets: Vec<Target> = times
        .first()
        .map(|(_, t)| t.iter().map(|x| x.target).collect())
        .unwrap_or_default();
    for (i, target) in targets.iter().enumerate() {
        let best = times
            .iter()
            .filter_map(|(_, t)| t.get(i).and_then(|x| x.time_s))
            .fold(None, |acc: Option<f64>, t| {
                Some(acc.map_or(t, |a| a.min(t)))
            });
        for (name, t) in times {
            let time_s = t.get(i).and_then(|x| x.time_s);
            let ratio = match (time_s, best) {
                (Some(t), Some(b)) if b > 0.0 => Some(t / b),
                (Some(_), Some(_)) => Some(1.0),
                _ => None,
            };
            rows.push(ComparisonRow {
                strategy: name.clone(),
                target: *target,
                time_s,
                ratio,
            });
        }
    }
    ComparisonTable { rows }
}

/// Convenience wrapper computing time-to-target for named logs.
pub fn compare_logs(logs: &[(String, &RunLog)], targets: &[Target]) -> ComparisonTable {
    let times: Vec<(String, Vec<TimeToTarget>)> = logs
        .iter()
        .map(|(name, log)| {
            (
                name.clone(),
                targets.iter().map(|&t| time_to_target(log, t)).collect(),
            )
        })
        .collect();
    compare(&times)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tt(v: Option<f64>) -> TimeToTarget {
        TimeToTarget {
            target: Target::Accuracy(0.5),
            time_s: v,
        }
    }

    #[test]
    fn first_crossing() {
        let curve = [(10.0, 0.5, 1.0), (20.0, 0.7, 0.8)];
        assert_eq!(
            time_to_target_on_curve(&curve, Target::Accuracy(0.6)).time_s,
            Some(20.0)
        );
        assert_eq!(
            time_to_target_on_curve(&curve, Target::Accuracy(0.9)).time_s,
            None
        );
        let wobbly = [
            (1.0, 0.2, 2.0),
            (2.0, 0.65, 1.0),
            (3.0, 0.4, 1.5),
            (4.0, 0.7, 0.9),
        ];
        assert_eq!(
            time_to_target_on_curve(&wobbly, Target::Accuracy(0.6)).time_s,
            Some(2.0)
        );
        assert_eq!(
            time_to_target_on_curve(&wobbly, Target::Loss(0.95)).time_s,
            Some(4.0)
        );
    }

    #[test]
    fn ratios_against_fastest() {
        let table = compare(&[
            ("A".into(), vec![tt(Some(10.0))]),
            ("B".into(), vec![tt(Some(14.3))]),
        ]);
        let b = table.row("B", Target::Accuracy(0.5)).unwrap();
        assert_eq!(format!("{:.2}", b.ratio.unwrap()), "1.43");
        assert_eq!(
            table.row("A", Target::Accuracy(0.5)).unwrap().ratio,
            Some(1.0)
        );
    }

    #[test]
    fn not_reached_marker() {
        let table = compare(&[
            ("A".into(), vec![tt(None)]),
            ("B".into(), vec![tt(Some(3.0))]),
        ]);
        assert_eq!(table.row("A", Target::Accuracy(0.5)).unwrap().ratio, None);
        let csv = table.to_csv();
        assert!(csv.contains("A,acc>=0.5,not_reached,not_reached"), "{csv}");
        assert!(csv.contains("B,acc>=0.5,3,1.00"), "{csv}");
    }

    #[test]
    fn equal_times_tie_at_one() {
        let table = compare(&[
            ("A".into(), vec![tt(Some(7.0))]),
            ("B".into(), vec![tt(Some(7.0))]),
        ]);
        assert!(table.rows.iter().all(|r| r.ratio == Some(1.0)));
    }
}
