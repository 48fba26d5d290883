use std::collections::{BTreeMap, BTreeSet};

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FreezeMask, LayerDelta, LayeredModel};
use crate::data::DataShard;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainParams {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

/// A client's contribution: parameter deltas for the layers it trained.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub layer_deltas: BTreeMap<usize, LayerDelta>,
    pub trained_layers: BTreeSet<usize>,
    pub origin_version: u64,
    pub sample_count: usize,
    /// Simulated wall-clock time at which the upload completes.
    pub arrival_time: f64,
}

impl ClientUpdate {
    pub fn validate(&self, layer_count: usize) -> Result<()> {
        if self.sample_count == 0 {
            return Err(Error::structural("update carries zero samples"));
        }
        if !self.layer_deltas.keys().eq(self.trained_layers.iter()) {
            return Err(Error::structural(
                "delta keys differ from trained layer set",
            ));
        }
        if let Some(&first) = self.trained_layers.first() {
            let expected: BTreeSet<usize> = (first..layer_count).collect();
            if self.trained_layers != expected {
                return Err(Error::structural(format!(
                    "trained layers {:?} are not a suffix of {layer_count} layers",
                    self.trained_layers
                )));
            }
        }
        Ok(())
    }

    /// Client-side parameters after training: `global + delta` on trained
    /// layers, `global` elsewhere.
    pub fn reconstruct(&self, global: &LayeredModel) -> Result<LayeredModel> {
        let mut model = global.clone();
        for (&i, delta) in &self.layer_deltas {
            let layer = model
                .layers_mut()
                .get_mut(i)
                .ok_or_else(|| Error::structural(format!("update touches missing layer {i}")))?;
            if !delta.matches(layer) {
                return Err(Error::structural(format!(
                    "delta shape mismatch on layer {i}"
                )));
            }
            layer.weights += &delta.weights;
            layer.biases += &delta.biases;
        }
        Ok(model)
    }
}

/// Server-side change to apply to the global model. Layers without an entry
/// stay untouched.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MergedDelta {
    pub layers: BTreeMap<usize, LayerDelta>,
}

impl MergedDelta {
    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

/// Plain SGD on the trainable suffix of a copy of `global`.
///
/// Training runs in delta space: the working parameters of a trained layer are
/// always `global + delta`, so the server reconstructs the client's final
/// parameters bit-exactly from the uploaded deltas. Frozen layers are never
/// written.
pub fn local_train(
    global: &LayeredModel,
    shard: &DataShard,
    params: TrainParams,
    mask: FreezeMask,
    shuffle_seed: u64,
) -> Result<ClientUpdate> {
    if shard.is_empty() {
        return Err(Error::structural(format!(
            "client {} has an empty shard",
            shard.client_id
        )));
    }
    if params.epochs == 0 || params.batch_size == 0 {
        return Err(Error::structural("epochs and batch size must be positive"));
    }
    let layer_count = global.layer_count();
    let start = mask.trainable_suffix_start();
    if start >= layer_count {
        return Err(Error::structural("mask leaves no trainable layer"));
    }

    let mut working = global.clone();
    let mut deltas: BTreeMap<usize, LayerDelta> = (start..layer_count)
        .map(|i| (i, LayerDelta::zeros_like(&global.layers()[i])))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut order: Vec<usize> = (0..shard.len()).collect();
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            let x = shard.features.select(Axis(0), batch);
            let y: Vec<usize> = batch.iter().map(|&i| shard.labels[i]).collect();
            let (_, cache) = working.forward(x.view())?;
            let grads = working.backward_partial(&cache, &y, mask)?;
            for (i, grad) in grads.iter() {
                let delta = deltas
                    .get_mut(&i)
                    .expect("gradient only for trainable layers");
                delta.add_scaled(-params.lr, grad);
                let base = &global.layers()[i];
                let layer = &mut working.layers_mut()[i];
                layer.weights = &base.weights + &delta.weights;
                layer.biases = &base.biases + &delta.biases;
            }
        }
    }

    if deltas.values().any(|d| d.iter().any(|v| !v.is_finite())) {
        return Err(Error::Numeric(format!(
            "client {} diverged during local training",
            shard.client_id
        )));
    }
    Ok(ClientUpdate {
        client_id: shard.client_id,
        trained_layers: deltas.keys().copied().collect(),
        layer_deltas: deltas,
        origin_version: global.version(),
        sample_count: shard.len(),
        arrival_time: 0.0,
    })
}

/// Adds `merged` to the model and advances its version by one.
pub fn apply_update(model: &LayeredModel, merged: &MergedDelta) -> Result<LayeredModel> {
    let mut next = model.clone();
    for (&i, delta) in &merged.layers {
        let layer = next
            .layers_mut()
            .get_mut(i)
            .ok_or_else(|| Error::structural(format!("merged delta names missing layer {i}")))?;
        if !delta.matches(layer) {
            return Err(Error::structural(format!(
                "merged delta shape mismatch on layer {i}"
            )));
        }
        layer.weights += &delta.weights;
        layer.biases += &delta.biases;
        if !layer.is_finite() {
            return Err(Error::Numeric(format!("layer {i} became non-finite")));
        }
    }
    let version = next.version() + 1;
    Ok(next.with_version(version))
}
