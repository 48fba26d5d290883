use crate::model::ClientUpdate;

/// Down-weighting of an update that is `staleness` versions old.
pub fn staleness_weight(staleness: u64) -> f64 {
    1.0 / ((1 + staleness) as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Admission {
    Buffered {
        staleness: u64,
    },
    Discarded {
        staleness: u64,
    },
    /// Buffered, and the buffer has reached the aggregation goal.
    AggregateNow {
        staleness: u64,
    },
}

/// FedBuff server buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct BuffServerState {
    buffer: Vec<ClientUpdate>,
    aggregation_goal: usize,
    staleness_cap: u64,
}

impl BuffServerState {
    pub fn new(aggregation_goal: usize, staleness_cap: u64) -> Self {
        assert!(aggregation_goal >= 1, "aggregation goal must be at least 1");
        Self {
            buffer: Vec::with_capacity(aggregation_goal),
            aggregation_goal,
            staleness_cap,
        }
    }

    pub fn aggregation_goal(&self) -> usize {
        self.aggregation_goal
    }

    pub fn staleness_cap(&self) -> u64 {
        self.staleness_cap
    }

    pub fn buffered(&self) -> &[ClientUpdate] {
        &self.buffer
    }

    /// Takes the buffered updates, leaving the buffer empty.
    pub fn drain(&mut self) -> Vec<ClientUpdate> {
        std::mem::take(&mut self.buffer)
    }

    pub fn admit(&mut self, update: ClientUpdate, current_version: u64) -> Admission {
        fedbuff_admit(self, update, current_version)
    }
}

/// Staleness check and buffering. Accepted deltas are scaled by
/// `1 / sqrt(1 + staleness)` before they enter the buffer.
pub fn fedbuff_admit(
    state: &mut BuffServerState,
    mut update: ClientUpdate,
    current_version: u64,
) -> Admission {
    let staleness = current_version.saturating_sub(update.origin_version);
    if staleness > state.staleness_cap {
        return Admission::Discarded { staleness };
    }
    let scale = staleness_weight(staleness);
    if scale != 1.0 {
        for delta in update.layer_deltas.values_mut() {
            delta.scale(scale);
        }
    }
    state.buffer.push(update);
    if state.buffer.len() >= state.aggregation_goal {
        Admission::AggregateNow { staleness }
    } else {
        Admission::Buffered { staleness }
    }
}
