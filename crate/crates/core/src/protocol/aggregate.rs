use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClientUpdate, LayerDelta, LayeredModel, MergedDelta};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregatorKind {
    FedAvg,
    /// FedOpt with Adam as the server optimizer.
    FedOpt,
}

impl std::fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AggregatorKind::FedAvg => "fedavg",
            AggregatorKind::FedOpt => "fedopt",
        })
    }
}

impl std::str::FromStr for AggregatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fedavg" => Ok(AggregatorKind::FedAvg),
            "fedopt" | "fedopt-adam" => Ok(AggregatorKind::FedOpt),
            other => Err(Error::Validation(format!("unknown aggregator `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerOptimizer {
    pub kind: AggregatorKind,
    pub server_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for ServerOptimizer {
    fn default() -> Self {
        Self {
            kind: AggregatorKind::FedAvg,
            server_lr: 0.001,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
        }
    }
}

/// Server aggregation state. Adam moments are allocated on first use and
/// shaped like the global model.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregatorState {
    pub optimizer: ServerOptimizer,
    adam_m: Vec<LayerDelta>,
    adam_v: Vec<LayerDelta>,
    adam_step: u64,
}

impl AggregatorState {
    pub fn new(optimizer: ServerOptimizer) -> Self {
        Self {
            optimizer,
            adam_m: Vec::new(),
            adam_v: Vec::new(),
            adam_step: 0,
        }
    }

    pub fn adam_step(&self) -> u64 {
        self.adam_step
    }

    /// Merged delta for `updates` according to the configured aggregator.
    pub fn aggregate(
        &mut self,
        global: &LayeredModel,
        updates: &[ClientUpdate],
    ) -> Result<MergedDelta> {
        match self.optimizer.kind {
            AggregatorKind::FedAvg => aggregate_fedavg(global, updates),
            AggregatorKind::FedOpt => aggregate_fedopt(self, global, updates),
        }
    }
}

fn canonical_order(updates: &[ClientUpdate]) -> Vec<&ClientUpdate> {
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by(|a, b| {
        a.client_id
            .cmp(&b.client_id)
            .then(a.origin_version.cmp(&b.origin_version))
            .then(a.arrival_time.total_cmp(&b.arrival_time))
    });
    sorted
}

/// Sample-weighted mean of deltas, layer by layer. A layer's divisor counts
/// only the updates that trained it; untouched layers get no entry.
pub fn aggregate_fedavg(global: &LayeredModel, updates: &[ClientUpdate]) -> Result<MergedDelta> {
    if updates.is_empty() {
        log::warn!("aggregation with no updates; round is a no-op");
        return Ok(MergedDelta::default());
    }
    for u in updates {
        u.validate(global.layer_count())?;
    }
    let ordered = canonical_order(updates);
    let mut merged = MergedDelta::default();
    for (index, layer) in global.layers().iter().enumerate() {
        let mut sum = LayerDelta::zeros_like(layer);
        let mut weight = 0usize;
        for u in &ordered {
            if let Some(delta) = u.layer_deltas.get(&index) {
                if !delta.matches(layer) {
                    return Err(Error::structural(format!(
                        "client {} sent a mis-shaped delta for layer {index}",
                        u.client_id
                    )));
                }
                sum.add_scaled(u.sample_count as f64, delta);
                weight += u.sample_count;
            }
        }
        if weight > 0 {
            let total = weight as f64;
            sum.iter_mut().for_each(|v| *v /= total);
            merged.layers.insert(index, sum);
        }
    }
    Ok(merged)
}

/// FedOpt: the negated FedAvg delta is a pseudo-gradient fed to Adam with bias
/// correction. Layers nobody trained see a zero gradient, so their moments
/// still decay and they may still move.
pub fn aggregate_fedopt(
    state: &mut AggregatorState,
    global: &LayeredModel,
    updates: &[ClientUpdate],
) -> Result<MergedDelta> {
    let averaged = aggregate_fedavg(global, updates)?;
    if state.adam_m.is_empty() {
        state.adam_m = global.layers().iter().map(LayerDelta::zeros_like).collect();
        state.adam_v = state.adam_m.clone();
    }
    if state.adam_m.len() != global.layer_count()
        || state
            .adam_m
            .iter()
            .zip(global.layers())
            .any(|(m, l)| !m.matches(l))
    {
        return Err(Error::structural(
            "optimizer state does not match model shape",
        ));
    }

    let ServerOptimizer {
        server_lr,
        beta1,
        beta2,
        eps,
        ..
    } = state.optimizer;
    state.adam_step += 1;
    let t = state.adam_step as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);

    let mut merged = MergedDelta::default();
    for (index, layer) in global.layers().iter().enumerate() {
        let zero = LayerDelta::zeros_like(layer);
        let avg = averaged.layers.get(&index).unwrap_or(&zero);
        let mut step = LayerDelta::zeros_like(layer);
        let m = &mut state.adam_m[index];
        let v = &mut state.adam_v[index];
        for (((d, m), v), out) in avg
            .iter()
            .zip(m.iter_mut())
            .zip(v.iter_mut())
            .zip(step.iter_mut())
        {
            let g = -d;
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *out = -server_lr * m_hat / (v_hat.sqrt() + eps);
        }
        merged.layers.insert(index, step);
    }
    Ok(merged)
}
