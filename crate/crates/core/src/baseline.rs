//! Centralised reference training on pooled data.

use crate::data::{DataShard, Dataset};
use crate::error::Result;
use crate::model::{apply_update, local_train, FreezeMask, LayeredModel, MergedDelta, TrainParams};
use crate::sim::{evaluate, Evaluation};

/// Trains a model with the given layer widths (`[]` for a linear softmax
/// classifier) on all of `train` with plain SGD and evaluates it on `test`.
pub fn centralized_accuracy(
    train: &Dataset,
    test: &Dataset,
    hidden: &[usize],
    params: TrainParams,
    seed: u64,
) -> Result<Evaluation> {
    let mut dims = vec![train.feature_dim()];
    dims.extend_from_slice(hidden);
    dims.push(train.class_count);
    let model = LayeredModel::init(&dims, seed)?;
    let shard = DataShard::new(0, train.features.clone(), train.labels.clone())?;
    let update = local_train(&model, &shard, params, FreezeMask::full(), seed ^ 0x5eed)?;
    let trained = apply_update(
        &model,
        &MergedDelta {
            layers: update.layer_deltas,
        },
    )?;
    evaluate(&trained, test)
}
