//! Device capability: base compute speed, per-round availability disturbance
//! and per-round bandwidth.

use std::fs::File;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::csv_io;
use crate::error::{Error, Result};
use crate::rng::{Purpose, Streams};

/// Upper clamp of the disturbance coefficient.
pub const MAX_DISTURBANCE: f64 = 1.3;

/// Default spread between slowest and fastest base compute time.
pub const DEFAULT_COMPUTE_RATIO: f64 = 13.3;

/// Default spread between best and worst bandwidth.
pub const DEFAULT_BANDWIDTH_RATIO: f64 = 200.0;

/// Trace file shipped with the crate: the default 64-client population
/// synthesised under seed 0, in the format read by [`load_traces`].
pub const DEFAULT_POPULATION_PATH: &str =
    concat!(env!("CARGO_MANIFEST_DIR"), "/data/default_population.csv");

#[derive(Clone, Debug, PartialEq)]
pub struct DeviceProfile {
    pub client_id: usize,
    /// Seconds for one full-model training batch on an undisturbed device.
    pub base_compute_s_per_batch: f64,
    /// Bytes per second; one entry is drawn per round.
    pub bandwidth_samples: Vec<f64>,
}

impl DeviceProfile {
    pub fn new(
        client_id: usize,
        base_compute_s_per_batch: f64,
        bandwidth_samples: Vec<f64>,
    ) -> Result<Self> {
        if !(base_compute_s_per_batch > 0.0) || !base_compute_s_per_batch.is_finite() {
            return Err(Error::validation(format!(
                "client {client_id}: base compute time {base_compute_s_per_batch} must be positive"
            )));
        }
        if bandwidth_samples.is_empty() {
            return Err(Error::validation(format!(
                "client {client_id}: no bandwidth samples"
            )));
        }
        if let Some(bad) = bandwidth_samples
            .iter()
            .find(|&&b| !(b > 0.0) || !b.is_finite())
        {
            return Err(Error::validation(format!(
                "client {client_id}: bandwidth {bad} must be positive"
            )));
        }
        Ok(Self {
            client_id,
            base_compute_s_per_batch,
            bandwidth_samples,
        })
    }
}

/// What a device can do in one particular round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundCapability {
    pub client_id: usize,
    pub round: u64,
    pub disturbance_w: f64,
    pub bandwidth_bps: f64,
    /// Multiplier on actual (not estimated) compute time; 1 when noise is off.
    pub compute_noise: f64,
}

/// Maps a raw draw onto `[1, MAX_DISTURBANCE]`.
pub fn clamp_disturbance(x: f64) -> f64 {
    if x <= 1.0 {
        1.0
    } else if x >= MAX_DISTURBANCE {
        MAX_DISTURBANCE
    } else {
        x
    }
}

/// Draws `x ~ N(1, std)` and clamps it into `[1, 1.3]`.
pub fn sample_disturbance<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    if std == 0.0 {
        return 1.0;
    }
    let x = Normal::new(1.0, std).expect("finite std").sample(rng);
    clamp_disturbance(x)
}

pub fn effective_compute_time(profile: &DeviceProfile, w: f64) -> f64 {
    w * profile.base_compute_s_per_batch
}

pub fn sample_bandwidth<R: Rng + ?Sized>(profile: &DeviceProfile, rng: &mut R) -> f64 {
    *profile
        .bandwidth_samples
        .choose(rng)
        .expect("profiles always hold bandwidth samples")
}

/// Per-round capability drawn from the keyed streams of `(client, round)`.
pub fn round_capability(
    profile: &DeviceProfile,
    streams: &Streams,
    round: u64,
    disturbance_std: f64,
    noise_eta: f64,
) -> RoundCapability {
    let id = profile.client_id as u64;
    let disturbance_w = sample_disturbance(
        &mut streams.stream(id, round, Purpose::Disturbance),
        disturbance_std,
    );
    let bandwidth_bps =
        sample_bandwidth(profile, &mut streams.stream(id, round, Purpose::Bandwidth));
    let compute_noise = if noise_eta > 0.0 {
        streams
            .stream(id, round, Purpose::ComputeNoise)
            .random_range(1.0 - noise_eta..=1.0 + noise_eta)
    } else {
        1.0
    };
    RoundCapability {
        client_id: profile.client_id,
        round,
        disturbance_w,
        bandwidth_bps,
        compute_noise,
    }
}

/// Parameters of a synthetic device population.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PopulationSpec {
    pub client_count: usize,
    /// Fastest possible base compute time per batch.
    pub min_compute_s: f64,
    /// Slowest / fastest base compute time.
    pub compute_ratio: f64,
    /// Worst bandwidth in bytes per second.
    pub min_bandwidth_bps: f64,
    /// Best / worst bandwidth.
    pub bandwidth_ratio: f64,
    pub bandwidth_samples_per_client: usize,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            client_count: 64,
            min_compute_s: 0.05,
            compute_ratio: DEFAULT_COMPUTE_RATIO,
            min_bandwidth_bps: 4_000.0,
            bandwidth_ratio: DEFAULT_BANDWIDTH_RATIO,
            bandwidth_samples_per_client: 16,
        }
    }
}

/// Log-uniform base compute times over `[min, min * compute_ratio]` and
/// bandwidth pools drawn log-uniformly over `[min, min * bandwidth_ratio]`.
pub fn synth_population(spec: &PopulationSpec, seed: u64) -> Result<Vec<DeviceProfile>> {
    if !(spec.compute_ratio >= 1.0) || !(spec.bandwidth_ratio >= 1.0) {
        return Err(Error::validation("heterogeneity ratios must be >= 1"));
    }
    if !(spec.min_compute_s > 0.0)
        || !(spec.min_bandwidth_bps > 0.0)
        || spec.bandwidth_samples_per_client == 0
    {
        return Err(Error::validation("population scales must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log_uniform = |min: f64, ratio: f64| min * ratio.powf(rng.random::<f64>());
    (0..spec.client_count)
        .map(|client_id| {
            let compute = log_uniform(spec.min_compute_s, spec.compute_ratio);
            let bandwidth = (0..spec.bandwidth_samples_per_client)
                .map(|_| log_uniform(spec.min_bandwidth_bps, spec.bandwidth_ratio))
                .collect();
            DeviceProfile::new(client_id, compute, bandwidth)
        })
        .collect()
}

/// Reads `client_id,base_compute_s_per_batch,bw...` rows. Rows may carry
/// different numbers of bandwidth columns (at least one).
pub fn load_traces(path: &Path) -> Result<Vec<DeviceProfile>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    if headers.len() < 3 || &headers[0] != "client_id" || &headers[1] != "base_compute_s_per_batch"
    {
        return Err(Error::parse(
            path,
            1,
            "header must be client_id,base_compute_s_per_batch,<bandwidth columns>",
        ));
    }
    let mut profiles = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::parse(path, line, e.to_string()))?;
        if record.len() < 3 {
            return Err(Error::parse(
                path,
                line,
                "need at least one bandwidth column",
            ));
        }
        let client_id: usize = record[0]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad client_id `{}`", &record[0])))?;
        let number = |field: &str| -> Result<f64> {
            field
                .parse::<f64>()
                .map_err(|_| Error::parse(path, line, format!("`{field}` is not a number")))
        };
        let compute = number(&record[1])?;
        let bandwidth = record
            .iter()
            .skip(2)
            .map(number)
            .collect::<Result<Vec<_>>>()?;
        let profile = DeviceProfile::new(client_id, compute, bandwidth)
            .map_err(|e| Error::Validation(format!("{}:{line}: {e}", path.display())))?;
        profiles.push(profile);
    }
    if profiles.is_empty() {
        return Err(Error::parse(path, 1, "trace file has no devices"));
    }
    for (expected, p) in profiles.iter().enumerate() {
        if p.client_id != expected {
            return Err(Error::Validation(format!(
                "{}: client ids must be 0..n in order, found {} at position {expected}",
                path.display(),
                p.client_id
            )));
        }
    }
    Ok(profiles)
}

pub fn write_traces(profiles: &[DeviceProfile], path: &Path) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let width = profiles
        .iter()
        .map(|p| p.bandwidth_samples.len())
        .max()
        .unwrap_or(1);
    let mut header = vec![
        "client_id".to_string(),
        "base_compute_s_per_batch".to_string(),
    ];
    header.extend((0..width).map(|i| format!("bw_{i}")));
    writer.write_record(&header).map_err(|e| csv_io(path, e))?;
    for p in profiles {
        let mut row = vec![
            p.client_id.to_string(),
            p.base_compute_s_per_batch.to_string(),
        ];
        row.extend(p.bandwidth_samples.iter().map(|b| b.to_string()));
        writer.write_record(&row).map_err(|e| csv_io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
