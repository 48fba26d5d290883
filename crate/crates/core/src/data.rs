//! Synthetic datasets, Dirichlet non-iid partitioning and CSV ingestion.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{Error, Result};

/// Standard deviation of every synthetic class cluster.
pub const CLUSTER_STD: f64 = 0.3;

/// Fraction of each class held out for testing.
pub const TEST_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::structural(format!(
                "{} feature rows for {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::structural(format!(
                "label {bad} outside {class_count} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSplit {
    pub train: Dataset,
    pub test: Dataset,
}

/// One client's local data.
#[derive(Clone, Debug, PartialEq)]
pub struct DataShard {
    pub client_id: usize,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl DataShard {
    pub fn new(client_id: usize, features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::structural("shard feature/label counts differ"));
        }
        Ok(Self {
            client_id,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Shannon entropy (nats) of the shard's label distribution.
    pub fn label_entropy(&self, class_count: usize) -> f64 {
        let mut counts = vec![0usize; class_count];
        for &y in &self.labels {
            counts[y] += 1;
        }
        let n = self.len() as f64;
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionSpec {
    pub client_count: usize,
    /// Dirichlet concentration; smaller means more skewed label mixes.
    pub data_alpha: f64,
    pub seed: u64,
}

/// Gaussian class clusters: each class mean is uniform in `[-1, 1]^d` and
/// samples are `Normal(mean, CLUSTER_STD^2 I)`. The first `TEST_FRACTION` of
/// every class goes to the test split.
pub fn generate_synthetic(
    class_count: usize,
    feature_dim: usize,
    samples_per_class: usize,
    seed: u64,
) -> Result<SyntheticSplit> {
    if class_count == 0 || feature_dim == 0 || samples_per_class == 0 {
        return Err(Error::validation(
            "class count, feature dim and samples per class must be >= 1",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let test_per_class = ((samples_per_class as f64) * TEST_FRACTION).round() as usize;
    let train_per_class = samples_per_class - test_per_class;

    let noise = Normal::new(0.0, CLUSTER_STD).expect("valid std");
    let mut train = Array2::zeros((class_count * train_per_class, feature_dim));
    let mut test = Array2::zeros((class_count * test_per_class, feature_dim));
    let mut train_labels = Vec::with_capacity(class_count * train_per_class);
    let mut test_labels = Vec::with_capacity(class_count * test_per_class);

    for class in 0..class_count {
        let mean: Vec<f64> = (0..feature_dim)
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        for s in 0..samples_per_class {
            let (target, row) = if s < test_per_class {
                test_labels.push(class);
                (&mut test, class * test_per_class + s)
            } else {
                train_labels.push(class);
                (&mut train, class * train_per_class + s - test_per_class)
            };
            for (j, m) in mean.iter().enumerate() {
                target[[row, j]] = m + noise.sample(&mut rng);
            }
        }
    }
    Ok(SyntheticSplit {
        train: Dataset::new(train, train_labels, class_count)?,
        test: Dataset::new(test, test_labels, class_count)?,
    })
}

/// Per-class Dirichlet split: for each class a proportion vector over clients
/// is drawn from `Dirichlet(data_alpha * 1)` and the class's samples are dealt
/// out accordingly. Empty clients then take one sample from the largest shard.
///
/// Returns the training-set row indices owned by each client.
pub fn dirichlet_assignment(
    labels: &[usize],
    class_count: usize,
    spec: &PartitionSpec,
) -> Result<Vec<Vec<usize>>> {
    if labels.is_empty() {
        return Err(Error::structural("cannot partition an empty dataset"));
    }
    if spec.client_count == 0 || !(spec.data_alpha > 0.0) {
        return Err(Error::validation(
            "client count must be >= 1 and data_alpha > 0",
        ));
    }
    if spec.client_count > labels.len() {
        return Err(Error::structural(format!(
            "{} clients but only {} training samples",
            spec.client_count,
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gamma = Gamma::new(spec.data_alpha, 1.0).map_err(|e| Error::validation(e.to_string()))?;
    let mut assignment = vec![Vec::new(); spec.client_count];

    for class in 0..class_count {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let mut weights: Vec<f64> = (0..spec.client_count)
            .map(|_| gamma.sample(&mut rng))
            .collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            // every draw underflowed; put the class on one client
            weights.iter_mut().for_each(|w| *w = 0.0);
            weights[rng.random_range(0..spec.client_count)] = 1.0;
        }
        let total: f64 = weights.iter().sum();
        let n = members.len();
        let mut cumulative = 0.0;
        let mut start = 0;
        for (client, w) in weights.iter().enumerate() {
            cumulative += w / total;
            let end = if client + 1 == spec.client_count {
                n
            } else {
                ((cumulative * n as f64).round() as usize).clamp(start, n)
            };
            assignment[client].extend_from_slice(&members[start..end]);
            start = end;
        }
    }

    while let Some(empty) = assignment.iter().position(Vec::is_empty) {
        let donor = (0..assignment.len())
            .max_by(|&a, &b| {
                assignment[a]
                    .len()
                    .cmp(&assignment[b].len())
                    .then(b.cmp(&a))
            })
            .expect("at least one client");
        let moved = assignment[donor].pop().expect("donor holds >= 2 samples");
        assignment[empty].push(moved);
    }
    for owned in &mut assignment {
        owned.sort_unstable();
    }
    Ok(assignment)
}

pub fn partition_dirichlet(dataset: &Dataset, spec: &PartitionSpec) -> Result<Vec<DataShard>> {
    let assignment = dirichlet_assignment(&dataset.labels, dataset.class_count, spec)?;
    Ok(assignment
        .iter()
        .enumerate()
        .map(|(client_id, rows)| {
            let part = dataset.select(rows);
            DataShard {
                client_id,
                features: part.features,
                labels: part.labels,
            }
        })
        .collect())
}

/// Splits rows round-robin into equal-sized shards (used for homogeneous setups).
pub fn partition_even(dataset: &Dataset, client_count: usize) -> Result<Vec<DataShard>> {
    if client_count == 0 || client_count > dataset.len() {
        return Err(Error::structural(format!(
            "cannot split {} samples over {client_count} clients",
            dataset.len()
        )));
    }
    let per_client = dataset.len() / client_count;
    Ok((0..client_count)
        .map(|c| {
            let rows: Vec<usize> = (0..per_client).map(|k| k * client_count + c).collect();
            let part = dataset.select(&rows);
            DataShard {
                client_id: c,
                features: part.features,
                labels: part.labels,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvSchema {
    pub label_column: String,
    /// Expected number of feature columns, if known.
    pub feature_dim: Option<usize>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            label_column: "label".into(),
            feature_dim: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    /// `(label as written in the file, dense label)` in ascending order.
    pub label_mapping: Vec<(i64, usize)>,
}

impl LoadedDataset {
    pub fn relabeled(&self) -> bool {
        self.label_mapping
            .iter()
            .any(|&(raw, dense)| raw != dense as i64)
    }
}

/// Reads numeric feature columns plus one integer label column. Labels are
/// mapped densely onto `0..class_count` in ascending order of their raw value.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<LoadedDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h == schema.label_column)
        .ok_or_else(|| {
            Error::parse(
                path,
                1,
                format!("no `{}` column in header", schema.label_column),
            )
        })?;
    let feature_dim = headers.len() - 1;
    if let Some(expected) = schema.feature_dim {
        if expected != feature_dim {
            return Err(Error::parse(
                path,
                1,
                format!("header has {feature_dim} feature columns, expected {expected}"),
            ));
        }
    }

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::parse(path, line, e.to_string()))?;
        if record.len() != headers.len() {
            return Err(Error::parse(
                path,
                line,
                format!(
                    "row {line} has {} fields, header has {}",
                    record.len(),
                    headers.len()
                ),
            ));
        }
        for (j, field) in record.iter().enumerate() {
            if j == label_idx {
                let label: i64 = field.parse().map_err(|_| {
                    Error::parse(
                        path,
                        line,
                        format!("row {line}: label `{field}` is not an integer"),
                    )
                })?;
                raw_labels.push(label);
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    Error::parse(
                        path,
                        line,
                        format!("row {line}: feature `{field}` is not numeric"),
                    )
                })?;
                if !v.is_finite() {
                    return Err(Error::parse(
                        path,
                        line,
                        format!("row {line}: non-finite feature"),
                    ));
                }
                values.push(v);
            }
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::parse(path, 1, "no data rows"));
    }

    let distinct: BTreeSet<i64> = raw_labels.iter().copied().collect();
    let label_mapping: Vec<(i64, usize)> = distinct.iter().copied().zip(0..).collect();
    let labels = raw_labels
        .iter()
        .map(|raw| {
            label_mapping
                .binary_search_by_key(raw, |&(r, _)| r)
                .expect("seen label")
        })
        .map(|pos| label_mapping[pos].1)
        .collect();
    let loaded = LoadedDataset {
        dataset: Dataset::new(
            Array2::from_shape_vec((raw_labels.len(), feature_dim), values)
                .expect("row widths checked"),
            labels,
            distinct.len(),
        )?,
        label_mapping,
    };
    if loaded.relabeled() {
        log::info!(
            "{}: labels relabeled densely {:?}",
            path.display(),
            loaded.label_mapping
        );
    }
    Ok(loaded)
}

/// Writes a dataset in the format [`load_csv`] reads (`f0..f{d-1},label`).
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header: Vec<String> = (0..dataset.feature_dim())
        .map(|j| format!("f{j}"))
        .collect();
    header.push("label".into());
    writer.write_record(&header).map_err(|e| csv_io(path, e))?;
    for (row, label) in dataset.features.rows().into_iter().zip(&dataset.labels) {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        fields.push(label.to_string());
        writer.write_record(&fields).map_err(|e| csv_io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_io(path: &Path, err: csv::Error) -> Error {
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::parse(path, 0, format!("{other:?}")),
    }
}
