use crate::error::{Error, Result};
use crate::model::{FreezeMask, LayeredModel};

/// Estimated one-epoch full-model costs of a client for the current round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeEstimate {
    pub client_id: usize,
    pub t_cmp_unit: f64,
    pub t_com_unit: f64,
    pub t_total_unit: f64,
}

/// Per-client assignment for one round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub client_id: usize,
    pub round: u64,
    pub epochs: usize,
    /// Requested fraction of the model to train, in `(0, 1]`.
    pub ratio: f64,
    /// Time (relative to the start of the training window) by which local
    /// computation must finish so the upload lands on the deadline.
    pub report_deadline: f64,
}

/// Local time update: extrapolates one probe batch to a full epoch and
/// prices a full-model upload.
///
/// `progress` is the fraction of the epoch the probe covered (one batch out
/// of the client's batches).
pub fn local_time_update(
    client_id: usize,
    probe_compute_s: f64,
    progress: f64,
    payload_bytes: f64,
    bandwidth_bps: f64,
) -> Result<TimeEstimate> {
    if !(progress > 0.0 && progress <= 1.0) {
        return Err(Error::structural(format!(
            "progress {progress} must lie in (0, 1]"
        )));
    }
    if !(bandwidth_bps > 0.0) || !(payload_bytes > 0.0) || !(probe_compute_s > 0.0) {
        return Err(Error::structural(
            "probe time, payload and bandwidth must be positive",
        ));
    }
    let t_com_unit = payload_bytes / bandwidth_bps;
    let t_cmp_unit = probe_compute_s / progress;
    Ok(TimeEstimate {
        client_id,
        t_cmp_unit,
        t_com_unit,
        t_total_unit: t_cmp_unit + t_com_unit,
    })
}

/// The `k`-th smallest estimated unit total time (1-based).
pub fn aggregation_interval(estimates: &[TimeEstimate], k: usize) -> Result<f64> {
    if k == 0 || k > estimates.len() {
        return Err(Error::structural(format!(
            "k = {k} outside 1..={}",
            estimates.len()
        )));
    }
    let mut totals: Vec<f64> = estimates.iter().map(|e| e.t_total_unit).collect();
    totals.sort_by(f64::total_cmp);
    Ok(totals[k - 1])
}

/// Workload scheduling for one client against the interval `t_k`.
pub fn workload_schedule(t_k: f64, estimate: &TimeEstimate, round: u64) -> Result<Schedule> {
    if !(t_k > 0.0) {
        return Err(Error::structural(format!(
            "aggregation interval {t_k} must be positive"
        )));
    }
    let TimeEstimate {
        t_cmp_unit: cmp,
        t_com_unit: com,
        ..
    } = *estimate;
    let epochs = ((t_k - com) / cmp).floor().max(1.0) as usize;
    let ratio = (t_k / (com + cmp)).min(1.0);
    let report_deadline = (t_k - com * ratio).max(0.0);
    if ratio < 1.0 && epochs != 1 {
        return Err(Error::Invariant(format!(
            "client {} got ratio {ratio} together with {epochs} epochs",
            estimate.client_id
        )));
    }
    Ok(Schedule {
        client_id: estimate.client_id,
        round,
        epochs,
        ratio,
        report_deadline,
    })
}

/// Left-hand side of the time-utility constraint:
/// `t_cmp * E * ratio + t_com * ratio`.
pub fn utility_lhs(estimate: &TimeEstimate, epochs: usize, ratio: f64) -> f64 {
    estimate.t_cmp_unit * epochs as f64 * ratio + estimate.t_com_unit * ratio
}

/// Smallest suffix start whose parameter fraction does not exceed `ratio`;
/// the output layer alone if no suffix fits.
pub fn ratio_to_suffix_start(layer_param_counts: &[usize], ratio: f64) -> usize {
    let total: usize = layer_param_counts.iter().sum();
    let last = layer_param_counts.len().saturating_sub(1);
    let mut suffix: usize = total;
    for (start, count) in layer_param_counts.iter().enumerate() {
        if suffix as f64 / total as f64 <= ratio {
            return start;
        }
        suffix -= count;
    }
    last
}

pub fn ratio_to_mask(ratio: f64, model: &LayeredModel) -> FreezeMask {
    let counts: Vec<usize> = model.layers().iter().map(|l| l.param_count()).collect();
    let start = ratio_to_suffix_start(&counts, ratio);
    FreezeMask::new(start, model.layer_count()).expect("start is a valid layer index")
}
