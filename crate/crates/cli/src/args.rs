use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fedsim::protocol::{AggregatorKind, Protocol};
use fedsim::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "fedsim",
    version,
    about = "Trace-driven simulator for SyncFL, FedBuff and TimelyFL"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one protocol and write its artifacts.
    Run(ConfigArgs),
    /// Run several protocols on the same seed and tabulate time-to-target.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        /// Protocols to compare.
        #[arg(long, value_delimiter = ',', default_value = "sync,fedbuff,timelyfl")]
        protocols: Vec<Protocol>,
    },
    /// Repeat `compare` over a grid of one parameter.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "sync,fedbuff,timelyfl")]
        protocols: Vec<Protocol>,
        /// Parameter to vary.
        #[arg(long, value_enum)]
        over: SweepParam,
        /// Grid values, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Write a synthetic device population as a trace CSV.
    Population {
        #[command(flatten)]
        config: ConfigArgs,
        /// Destination CSV.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    DataAlpha,
    K,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::DataAlpha => "data_alpha",
            SweepParam::K => "k",
        }
    }
}

/// A config file plus one flag per config key. Flags win over the file.
#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    /// TOML config file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,

    // [run]
    #[arg(long, help_heading = "Run")]
    pub protocol: Option<Protocol>,
    #[arg(long, help_heading = "Run")]
    pub rounds: Option<usize>,
    #[arg(long, help_heading = "Run")]
    pub concurrency: Option<usize>,
    /// Participation target (TimelyFL) or aggregation goal (FedBuff).
    #[arg(long, short, help_heading = "Run")]
    pub k: Option<usize>,
    #[arg(long, help_heading = "Run")]
    pub seed: Option<u64>,
    #[arg(long, help_heading = "Run")]
    pub eval_every: Option<usize>,
    #[arg(long, help_heading = "Run")]
    pub stop_accuracy: Option<f64>,
    #[arg(long, help_heading = "Run")]
    pub noise_eta: Option<f64>,
    #[arg(long, help_heading = "Run")]
    pub disturbance_std: Option<f64>,
    #[arg(long, value_delimiter = ',', help_heading = "Run")]
    pub targets: Option<Vec<f64>>,

    // [data]
    #[arg(long, help_heading = "Data")]
    pub classes: Option<usize>,
    #[arg(long, help_heading = "Data")]
    pub feature_dim: Option<usize>,
    #[arg(long, help_heading = "Data")]
    pub samples_per_class: Option<usize>,
    #[arg(long, help_heading = "Data")]
    pub data_alpha: Option<f64>,
    #[arg(long, help_heading = "Data")]
    pub csv_path: Option<PathBuf>,
    #[arg(long, help_heading = "Data")]
    pub test_csv_path: Option<PathBuf>,
    #[arg(long, help_heading = "Data")]
    pub label_column: Option<String>,

    // [model]
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', help_heading = "Model")]
    pub hidden: Option<Vec<usize>>,

    // [train]
    #[arg(long, help_heading = "Train")]
    pub lr: Option<f64>,
    #[arg(long, help_heading = "Train")]
    pub batch_size: Option<usize>,
    #[arg(long, help_heading = "Train")]
    pub local_epochs: Option<usize>,

    // [server]
    #[arg(long, help_heading = "Server")]
    pub aggregator: Option<AggregatorKind>,
    #[arg(long, help_heading = "Server")]
    pub server_lr: Option<f64>,
    #[arg(long, help_heading = "Server")]
    pub beta1: Option<f64>,
    #[arg(long, help_heading = "Server")]
    pub beta2: Option<f64>,
    #[arg(long, help_heading = "Server")]
    pub eps: Option<f64>,
    #[arg(long, help_heading = "Server")]
    pub staleness_cap: Option<u64>,

    // [population]
    #[arg(long, help_heading = "Population")]
    pub clients: Option<usize>,
    #[arg(long, help_heading = "Population")]
    pub min_compute_s: Option<f64>,
    #[arg(long, help_heading = "Population")]
    pub compute_ratio: Option<f64>,
    #[arg(long, help_heading = "Population")]
    pub min_bandwidth_bps: Option<f64>,
    #[arg(long, help_heading = "Population")]
    pub bandwidth_ratio: Option<f64>,
    #[arg(long, help_heading = "Population")]
    pub bandwidth_samples: Option<usize>,
    #[arg(long, help_heading = "Population")]
    pub trace_path: Option<PathBuf>,
    #[arg(long, help_heading = "Population")]
    pub bytes_per_param: Option<f64>,

    // [output]
    #[arg(long, short, env = "FEDSIM_OUTPUT_DIR", help_heading = "Output")]
    pub output_dir: Option<PathBuf>,
}

fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *slot = v.clone();
    }
}

impl ConfigArgs {
    /// Config file (or defaults) with every given flag applied on top.
    pub fn load(&self) -> fedsim::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        self.apply(&mut cfg);
        Ok(cfg)
    }

    pub fn apply(&self, cfg: &mut RunConfig) {
        let r = &mut cfg.run;
        set(&mut r.protocol, &self.protocol);
        set(&mut r.rounds, &self.rounds);
        set(&mut r.concurrency, &self.concurrency);
        if self.k.is_some() {
            r.k = self.k;
        }
        set(&mut r.seed, &self.seed);
        set(&mut r.eval_every, &self.eval_every);
        if self.stop_accuracy.is_some() {
            r.stop_accuracy = self.stop_accuracy;
        }
        set(&mut r.noise_eta, &self.noise_eta);
        set(&mut r.disturbance_std, &self.disturbance_std);
        set(&mut r.targets, &self.targets);

        let d = &mut cfg.data;
        set(&mut d.classes, &self.classes);
        set(&mut d.feature_dim, &self.feature_dim);
        set(&mut d.samples_per_class, &self.samples_per_class);
        set(&mut d.data_alpha, &self.data_alpha);
        if self.csv_path.is_some() {
            d.csv_path = self.csv_path.clone();
        }
        if self.test_csv_path.is_some() {
            d.test_csv_path = self.test_csv_path.clone();
        }
        set(&mut d.label_column, &self.label_column);

        set(&mut cfg.model.hidden, &self.hidden);

        let t = &mut cfg.train;
        set(&mut t.lr, &self.lr);
        set(&mut t.batch_size, &self.batch_size);
        set(&mut t.local_epochs, &self.local_epochs);

        let s = &mut cfg.server;
        set(&mut s.aggregator, &self.aggregator);
        set(&mut s.server_lr, &self.server_lr);
        set(&mut s.beta1, &self.beta1);
        set(&mut s.beta2, &self.beta2);
        set(&mut s.eps, &self.eps);
        set(&mut s.staleness_cap, &self.staleness_cap);

        let p = &mut cfg.population;
        set(&mut p.clients, &self.clients);
        set(&mut p.min_compute_s, &self.min_compute_s);
        set(&mut p.compute_ratio, &self.compute_ratio);
        set(&mut p.min_bandwidth_bps, &self.min_bandwidth_bps);
        set(&mut p.bandwidth_ratio, &self.bandwidth_ratio);
        set(&mut p.bandwidth_samples, &self.bandwidth_samples);
        if self.trace_path.is_some() {
            p.trace_path = self.trace_path.clone();
        }
        set(&mut p.bytes_per_param, &self.bytes_per_param);

        set(&mut cfg.output.dir, &self.output_dir);
    }
}
