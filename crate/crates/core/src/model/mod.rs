//! Dense feed-forward models with exact manual gradients and suffix freezing.
//!
//! A [`LayeredModel`] is the unit of training and aggregation. Clients train a
//! contiguous output-side suffix of layers selected by a [`FreezeMask`]; the
//! layers in front of it run forward only and never receive gradients.

mod checkpoint;
mod train;

pub use checkpoint::{checkpoint_string, parse_checkpoint, read_checkpoint, write_checkpoint};
pub use train::{apply_update, local_train, ClientUpdate, MergedDelta, TrainParams};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
    /// Output layer feeding softmax cross-entropy. Emits raw logits.
    SoftmaxHead,
}

impl Activation {
    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| if v > 0.0 { v } else { 0.0 }),
            Activation::Identity | Activation::SoftmaxHead => z.clone(),
        }
    }

    fn backprop(self, upstream: &mut Array2<f64>, z: &Array2<f64>) {
        if let Activation::Relu = self {
            upstream.zip_mut_with(z, |g, &pre| {
                if pre <= 0.0 {
                    *g = 0.0;
                }
            });
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
            Activation::SoftmaxHead => "softmax-head",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            "softmax-head" => Ok(Activation::SoftmaxHead),
            other => Err(Error::structural(format!("unknown activation `{other}`"))),
        }
    }
}

/// Weights are stored `out_dim x in_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Array2<f64>, biases: Array1<f64>, activation: Activation) -> Result<Self> {
        if weights.nrows() != biases.len() {
            return Err(Error::structural(format!(
                "weights have {} rows but biases have {} entries",
                weights.nrows(),
                biases.len()
            )));
        }
        Ok(Self {
            weights,
            biases,
            activation,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Array2::zeros((out_dim, in_dim)),
            biases: Array1::zeros(out_dim),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .all(|v| v.is_finite())
    }
}

/// Per-layer tensor pair with the same shapes as a [`Layer`]'s parameters.
/// Used for gradients and for parameter deltas.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerDelta {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl LayerDelta {
    pub fn zeros_like(layer: &Layer) -> Self {
        Self {
            weights: Array2::zeros(layer.weights.raw_dim()),
            biases: Array1::zeros(layer.biases.len()),
        }
    }

    pub fn matches(&self, layer: &Layer) -> bool {
        self.weights.dim() == layer.weights.dim() && self.biases.len() == layer.biases.len()
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights.mapv_inplace(|v| v * factor);
        self.biases.mapv_inplace(|v| v * factor);
    }

    /// `self += factor * other`
    pub fn add_scaled(&mut self, factor: f64, other: &LayerDelta) {
        self.weights.scaled_add(factor, &other.weights);
        self.biases.scaled_add(factor, &other.biases);
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.biases.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }
}

pub type LayerGrad = LayerDelta;

/// All layers at index `>= trainable_suffix_start` train; earlier layers are frozen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FreezeMask {
    trainable_suffix_start: usize,
}

impl FreezeMask {
    pub fn new(trainable_suffix_start: usize, layer_count: usize) -> Result<Self> {
        if layer_count == 0 || trainable_suffix_start >= layer_count {
            return Err(Error::structural(format!(
                "suffix start {trainable_suffix_start} leaves no trainable layer in a {layer_count}-layer model"
            )));
        }
        Ok(Self {
            trainable_suffix_start,
        })
    }

    pub fn full() -> Self {
        Self {
            trainable_suffix_start: 0,
        }
    }

    pub fn output_only(layer_count: usize) -> Self {
        Self {
            trainable_suffix_start: layer_count.saturating_sub(1),
        }
    }

    pub fn trainable_suffix_start(&self) -> usize {
        self.trainable_suffix_start
    }

    pub fn is_trainable(&self, layer: usize) -> bool {
        layer >= self.trainable_suffix_start
    }
}

/// Inputs and pre-activations recorded by [`LayeredModel::forward`].
#[derive(Clone, Debug)]
pub struct ActivationCache {
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

impl ActivationCache {
    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    pub fn batch_size(&self) -> usize {
        self.logits.nrows()
    }
}

/// Gradients for a trainable suffix. Frozen layers have no entry.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    layers: BTreeMap<usize, LayerGrad>,
}

impl GradientSet {
    pub fn get(&self, layer: usize) -> Option<&LayerGrad> {
        self.layers.get(&layer)
    }

    pub fn layer_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.layers.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &LayerGrad)> {
        self.layers.iter().map(|(i, g)| (*i, g))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayeredModel {
    layers: Vec<Layer>,
    version: u64,
}

impl LayeredModel {
    pub fn new(layers: Vec<Layer>, version: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::structural("model needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::structural(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        if let Some(i) = layers.iter().position(|l| !l.is_finite()) {
            return Err(Error::Numeric(format!(
                "layer {i} holds non-finite parameters"
            )));
        }
        Ok(Self { layers, version })
    }

    /// Relu hidden layers and a softmax head, initialised uniformly in
    /// `[-sqrt(1/in_dim), sqrt(1/in_dim)]`.
    ///
    /// `dims` lists the input width followed by every layer's output width.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::structural(format!("invalid layer dims {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                let (in_dim, out_dim) = (pair[0], pair[1]);
                let bound = (1.0 / in_dim as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((out_dim, in_dim), || {
                    rng.random_range(-bound..=bound)
                });
                let biases =
                    Array1::from_shape_simple_fn(out_dim, || rng.random_range(-bound..=bound));
                let activation = if i == last {
                    Activation::SoftmaxHead
                } else {
                    Activation::Relu
                };
                Layer {
                    weights,
                    biases,
                    activation,
                }
            })
            .collect();
        Self::new(layers, 0)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, index: usize) -> Option<&Layer> {
        self.layers.get(index)
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn class_count(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Parameter count of the layers a mask leaves trainable.
    pub fn suffix_param_count(&self, mask: FreezeMask) -> usize {
        self.layers[mask.trainable_suffix_start()..]
            .iter()
            .map(Layer::param_count)
            .sum()
    }

    /// Fraction of the parameter count trained under `mask`.
    pub fn trainable_fraction(&self, mask: FreezeMask) -> f64 {
        self.suffix_param_count(mask) as f64 / self.param_count() as f64
    }

    pub fn forward(&self, batch: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ActivationCache)> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::structural(format!(
                "batch has {} features, model expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        if !batch.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite value in input batch".into()));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = batch.to_owned();
        for layer in &self.layers {
            let z = current.dot(&layer.weights.t()) + &layer.biases;
            let out = layer.activation.apply(&z);
            inputs.push(current);
            pre_activations.push(z);
            current = out;
        }
        let cache = ActivationCache {
            inputs,
            pre_activations,
            logits: current.clone(),
        };
        Ok((current, cache))
    }

    /// Gradients of mean softmax cross-entropy for the layers `mask` leaves
    /// trainable. The error signal stops at the first trainable layer.
    pub fn backward_partial(
        &self,
        cache: &ActivationCache,
        labels: &[usize],
        mask: FreezeMask,
    ) -> Result<GradientSet> {
        let n = cache.batch_size();
        if labels.len() != n || cache.pre_activations.len() != self.layers.len() {
            return Err(Error::structural(format!(
                "cache for {n} samples and {} layers does not match {} labels on a {}-layer model",
                cache.pre_activations.len(),
                labels.len(),
                self.layers.len()
            )));
        }
        let classes = self.class_count();
        if let Some(bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::structural(format!(
                "label {bad} outside {classes} classes"
            )));
        }
        let start = mask.trainable_suffix_start();
        if start >= self.layers.len() {
            return Err(Error::structural("mask leaves no trainable layer"));
        }

        let mut upstream = softmax_rows(&cache.logits);
        for (row, &y) in upstream.axis_iter_mut(Axis(0)).zip(labels) {
            let mut row = row;
            row[y] -= 1.0;
        }
        upstream.mapv_inplace(|v| v / n as f64);

        let mut layers = BTreeMap::new();
        for i in (start..self.layers.len()).rev() {
            let layer = &self.layers[i];
            layer
                .activation
                .backprop(&mut upstream, &cache.pre_activations[i]);
            let weights = upstream.t().dot(&cache.inputs[i]);
            let biases = upstream.sum_axis(Axis(0));
            if i > start {
                upstream = upstream.dot(&layer.weights);
            }
            layers.insert(i, LayerGrad { weights, biases });
        }
        Ok(GradientSet { layers })
    }

    /// Mean cross-entropy of the softmax of this model's logits.
    pub fn loss(&self, batch: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
        let (logits, _) = self.forward(batch)?;
        cross_entropy(&logits, labels)
    }

    /// Arg-max class per row; ties go to the lowest class index.
    pub fn predict(&self, batch: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let (logits, _) = self.forward(batch)?;
        Ok(logits
            .axis_iter(Axis(0))
            .map(|row| argmax(row.iter().copied()))
            .collect())
    }

    pub(crate) fn with_version(mut self, version: u64) -> Self {
        self.version = version;
        self
    }
}

pub fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean softmax cross-entropy, computed with log-sum-exp.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    if logits.nrows() != labels.len() || logits.nrows() == 0 {
        return Err(Error::structural(format!(
            "{} logit rows for {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (row, &y) in logits.axis_iter(Axis(0)).zip(labels) {
        if y >= row.len() {
            return Err(Error::structural(format!(
                "label {y} outside {} classes",
                row.len()
            )));
        }
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    Ok(total / labels.len() as f64)
}
