//! Run configuration.
//!
//! Configs are TOML files with one table per concern. Every key has a
//! default, so an empty file is a valid config:
//!
//! ```toml
//! [run]
//! protocol = "timelyfl"   # sync | fedbuff | timelyfl
//! rounds = 200            # rounds (sync, timelyfl) or aggregations (fedbuff)
//! concurrency = 64        # clients training at once
//! # k = 32                # participation target / aggregation goal, default ceil(n / 2)
//! seed = 0
//!
//! [server]
//! aggregator = "fedavg"   # fedavg | fedopt
//! ```
//!
//! See `RunConfig` field docs and the README for the full key list.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{AggregatorKind, Protocol, ServerOptimizer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub protocol: Protocol,
    pub rounds: usize,
    pub concurrency: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub seed: u64,
    /// Evaluate every this many aggregations (the last one is always evaluated).
    pub eval_every: usize,
    /// Stop once test accuracy reaches this value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_accuracy: Option<f64>,
    /// Multiplicative uniform noise `[1 - eta, 1 + eta]` on actual compute time.
    pub noise_eta: f64,
    /// Std of the availability draw before clamping into `[1, 1.3]`.
    pub disturbance_std: f64,
    /// Accuracy targets reported by `compare` and `sweep`.
    pub targets: Vec<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            protocol: Protocol::TimelyFl,
            rounds: 200,
            concurrency: 64,
            k: None,
            seed: 0,
            eval_every: 1,
            stop_accuracy: None,
            noise_eta: 0.0,
            disturbance_std: 0.3,
            targets: vec![0.5, 0.6, 0.7],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub classes: usize,
    pub feature_dim: usize,
    pub samples_per_class: usize,
    /// Dirichlet concentration of the label split across clients.
    pub data_alpha: f64,
    /// Load training data from CSV instead of generating it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<PathBuf>,
    /// Held-out CSV; without it 20% of `csv_path` is held out.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_csv_path: Option<PathBuf>,
    pub label_column: String,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            classes: 10,
            feature_dim: 8,
            samples_per_class: 200,
            data_alpha: 0.1,
            csv_path: None,
            test_csv_path: None,
            label_column: "label".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Hidden layer widths; input and output widths come from the data.
    pub hidden: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: vec![128, 64],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub batch_size: usize,
    /// Local epochs for sync and fedbuff clients.
    pub local_epochs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            lr: 0.05,
            batch_size: 10,
            local_epochs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub aggregator: AggregatorKind,
    pub server_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// FedBuff drops updates more than this many versions old.
    pub staleness_cap: u64,
}

impl Default for ServerSection {
    fn default() -> Self {
        let opt = ServerOptimizer::default();
        Self {
            aggregator: opt.kind,
            server_lr: opt.server_lr,
            beta1: opt.beta1,
            beta2: opt.beta2,
            eps: opt.eps,
            staleness_cap: 10,
        }
    }
}

impl ServerSection {
    pub fn optimizer(&self) -> ServerOptimizer {
        ServerOptimizer {
            kind: self.aggregator,
            server_lr: self.server_lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSection {
    pub clients: usize,
    pub min_compute_s: f64,
    pub compute_ratio: f64,
    pub min_bandwidth_bps: f64,
    pub bandwidth_ratio: f64,
    pub bandwidth_samples: usize,
    /// Device trace CSV; overrides the synthetic population.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<PathBuf>,
    /// Wire size of one parameter.
    pub bytes_per_param: f64,
}

impl Default for PopulationSection {
    fn default() -> Self {
        let spec = crate::device::PopulationSpec::default();
        Self {
            clients: spec.client_count,
            min_compute_s: spec.min_compute_s,
            compute_ratio: spec.compute_ratio,
            min_bandwidth_bps: spec.min_bandwidth_bps,
            bandwidth_ratio: spec.bandwidth_ratio,
            bandwidth_samples: spec.bandwidth_samples_per_client,
            trace_path: None,
            bytes_per_param: 4.0,
        }
    }
}

impl PopulationSection {
    pub fn spec(&self) -> crate::device::PopulationSpec {
        crate::device::PopulationSpec {
            client_count: self.clients,
            min_compute_s: self.min_compute_s,
            compute_ratio: self.compute_ratio,
            min_bandwidth_bps: self.min_bandwidth_bps,
            bandwidth_ratio: self.bandwidth_ratio,
            bandwidth_samples_per_client: self.bandwidth_samples,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "fedsim-out".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub server: ServerSection,
    pub population: PopulationSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Participation target `k` (TimelyFL) or aggregation goal `K` (FedBuff).
    pub fn k(&self) -> usize {
        self.run
            .k
            .unwrap_or_else(|| default_k(self.run.concurrency))
    }

    /// A copy with every derived default written out explicitly.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.run.k = Some(self.k());
        out
    }

    /// Checks everything that can be checked without touching the filesystem
    /// except for input-file existence.
    pub fn validate(&self, population_size: usize) -> Result<()> {
        let r = &self.run;
        let k = self.k();
        let fail = |msg: String| Err(Error::Validation(msg));
        if r.concurrency == 0 {
            return fail("concurrency must be >= 1".into());
        }
        if k == 0 || k > r.concurrency {
            return fail(format!("k = {k} must lie in 1..={}", r.concurrency));
        }
        if r.concurrency > population_size {
            return fail(format!(
                "concurrency {} exceeds population size {population_size}",
                r.concurrency
            ));
        }
        if r.eval_every == 0 {
            return fail("eval_every must be >= 1".into());
        }
        if !(0.0..1.0).contains(&r.noise_eta) {
            return fail(format!("noise_eta {} must lie in [0, 1)", r.noise_eta));
        }
        if !(r.disturbance_std >= 0.0) || !r.disturbance_std.is_finite() {
            return fail("disturbance_std must be finite and >= 0".into());
        }
        if let Some(bad) = r.targets.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return fail(format!("accuracy target {bad} outside [0, 1]"));
        }
        let d = &self.data;
        if !(d.data_alpha > 0.0) || !d.data_alpha.is_finite() {
            return fail("data_alpha must be > 0".into());
        }
        if d.csv_path.is_none()
            && (d.classes == 0 || d.feature_dim == 0 || d.samples_per_class == 0)
        {
            return fail("classes, feature_dim and samples_per_class must be >= 1".into());
        }
        if self.model.hidden.contains(&0) {
            return fail("hidden layer widths must be >= 1".into());
        }
        let t = &self.train;
        if !(t.lr > 0.0) || !t.lr.is_finite() {
            return fail("client lr must be > 0".into());
        }
        if t.batch_size == 0 || t.local_epochs == 0 {
            return fail("batch_size and local_epochs must be >= 1".into());
        }
        let s = &self.server;
        if !(s.server_lr > 0.0) || !(s.eps > 0.0) {
            return fail("server_lr and eps must be > 0".into());
        }
        if !(0.0..1.0).contains(&s.beta1) || !(0.0..1.0).contains(&s.beta2) {
            return fail("beta1 and beta2 must lie in [0, 1)".into());
        }
        let p = &self.population;
        if p.trace_path.is_none() {
            if p.clients == 0 {
                return fail("population needs at least one client".into());
            }
            if !(p.compute_ratio >= 1.0) || !(p.bandwidth_ratio >= 1.0) {
                return fail("heterogeneity ratios must be >= 1".into());
            }
            if !(p.min_compute_s > 0.0) || !(p.min_bandwidth_bps > 0.0) || p.bandwidth_samples == 0
            {
                return fail("population scales must be positive".into());
            }
        }
        if !(p.bytes_per_param > 0.0) {
            return fail("bytes_per_param must be > 0".into());
        }
        Ok(())
    }

    /// Fails with an I/O error if any referenced input file is missing.
    pub fn check_inputs_exist(&self) -> Result<()> {
        let paths = [
            self.data.csv_path.as_ref(),
            self.data.test_csv_path.as_ref(),
            self.population.trace_path.as_ref(),
        ];
        for path in paths.into_iter().flatten() {
            if !path.is_file() {
                return Err(Error::io(
                    path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                ));
            }
        }
        Ok(())
    }
}

/// Half the concurrency, rounded up.
pub fn default_k(concurrency: usize) -> usize {
    concurrency.div_ceil(2)
}
