//! Discrete-event execution of the three protocols.
//!
//! SyncFL and TimelyFL advance in rounds whose probe reports, update
//! arrivals and deadlines go through the event queue; FedBuff is a free-running
//! event loop in which every arrival immediately spawns a replacement task.
//! All randomness comes from keyed streams, and client training runs in
//! parallel but is committed in client-id order, so a run is a pure function
//! of its config.

mod events;
mod runlog;

pub use events::{EventKind, EventQueue, SimClock, SimEvent};
pub use runlog::{AggregationRecord, Assignment, Evaluation, OutcomeCounts, RunLog, TaskOutcome};

use std::collections::BTreeMap;

use ndarray::Axis;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::data::{self, CsvSchema, DataShard, Dataset, PartitionSpec};
use crate::device::{
    self, effective_compute_time, round_capability, DeviceProfile, RoundCapability,
};
use crate::error::{Error, Result};
use crate::model::{
    apply_update, argmax, cross_entropy, local_train, ClientUpdate, FreezeMask, LayeredModel,
    TrainParams,
};
use crate::protocol::{
    aggregation_interval, local_time_update, ratio_to_mask, utility_lhs, workload_schedule,
    Admission, AggregatorState, BuffServerState, Protocol, Schedule, TimeEstimate,
};
use crate::rng::{Purpose, Streams, SERVER};

/// Relative slack when comparing an arrival with the round deadline. Costs are
/// built from the same estimates as the deadline, so only rounding separates
/// an exactly-on-time arrival from the deadline itself.
const DEADLINE_SLACK: f64 = 1e-9;

/// Everything a run needs besides its config: devices, client shards and the
/// held-out test set.
#[derive(Clone, Debug)]
pub struct Environment {
    pub population: Vec<DeviceProfile>,
    pub shards: Vec<DataShard>,
    pub test: Dataset,
}

impl Environment {
    pub fn new(
        population: Vec<DeviceProfile>,
        shards: Vec<DataShard>,
        test: Dataset,
    ) -> Result<Self> {
        if population.len() != shards.len() {
            return Err(Error::structural(format!(
                "{} devices but {} shards",
                population.len(),
                shards.len()
            )));
        }
        for (i, (p, s)) in population.iter().zip(&shards).enumerate() {
            if p.client_id != i || s.client_id != i {
                return Err(Error::structural(format!("client {i} is out of order")));
            }
            if s.is_empty() {
                return Err(Error::structural(format!("client {i} has no data")));
            }
            if s.features.ncols() != test.feature_dim() {
                return Err(Error::structural(format!(
                    "client {i} feature width differs from test set"
                )));
            }
        }
        if test.is_empty() {
            return Err(Error::structural("test set is empty"));
        }
        Ok(Self {
            population,
            shards,
            test,
        })
    }

    /// Builds devices and data from the config. The master seed keys every
    /// derived seed, so all protocols run against the same environment.
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        cfg.check_inputs_exist()?;
        let streams = Streams::new(cfg.run.seed);
        let population = match &cfg.population.trace_path {
            Some(path) => device::load_traces(path)?,
            None => device::synth_population(
                &cfg.population.spec(),
                streams.seed_for(SERVER, 0, Purpose::Population),
            )?,
        };

        let (train, test) = match &cfg.data.csv_path {
            Some(path) => {
                let schema = CsvSchema {
                    label_column: cfg.data.label_column.clone(),
                    feature_dim: None,
                };
                let full = data::load_csv(path, &schema)?;
                match &cfg.data.test_csv_path {
                    Some(test_path) => {
                        let test = data::load_csv(test_path, &schema)?;
                        if test.label_mapping != full.label_mapping {
                            return Err(Error::Validation(
                                "train and test CSVs use different label sets".into(),
                            ));
                        }
                        (full.dataset, test.dataset)
                    }
                    None => holdout(
                        &full.dataset,
                        streams.seed_for(SERVER, 1, Purpose::Partition),
                    ),
                }
            }
            None => {
                let split = data::generate_synthetic(
                    cfg.data.classes,
                    cfg.data.feature_dim,
                    cfg.data.samples_per_class,
                    streams.seed_for(SERVER, 0, Purpose::DataGenerate),
                )?;
                (split.train, split.test)
            }
        };
        let shards = data::partition_dirichlet(
            &train,
            &PartitionSpec {
                client_count: population.len(),
                data_alpha: cfg.data.data_alpha,
                seed: streams.seed_for(SERVER, 0, Purpose::Partition),
            },
        )?;
        Self::new(population, shards, test)
    }

    pub fn feature_dim(&self) -> usize {
        self.test.feature_dim()
    }

    pub fn class_count(&self) -> usize {
        self.test.class_count
    }

    /// All training data pooled back together.
    pub fn pooled_train(&self) -> Dataset {
        let rows: usize = self.shards.iter().map(DataShard::len).sum();
        let mut features = ndarray::Array2::zeros((rows, self.feature_dim()));
        let mut labels = Vec::with_capacity(rows);
        let mut at = 0;
        for s in &self.shards {
            features
                .slice_mut(ndarray::s![at..at + s.len(), ..])
                .assign(&s.features);
            labels.extend_from_slice(&s.labels);
            at += s.len();
        }
        Dataset {
            features,
            labels,
            class_count: self.class_count(),
        }
    }
}

fn holdout(full: &Dataset, seed: u64) -> (Dataset, Dataset) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rows: Vec<usize> = (0..full.len()).collect();
    rows.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    let test_len = ((full.len() as f64) * data::TEST_FRACTION).round().max(1.0) as usize;
    let (test, train) = rows.split_at(test_len.min(full.len() - 1));
    let (mut test, mut train) = (test.to_vec(), train.to_vec());
    test.sort_unstable();
    train.sort_unstable();
    (full.select(&train), full.select(&test))
}

/// Test accuracy (arg-max, ties to the lowest class) and mean cross-entropy.
pub fn evaluate(model: &LayeredModel, test: &Dataset) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::structural("cannot evaluate on an empty test set"));
    }
    let (logits, _) = model.forward(test.features.view())?;
    let correct = logits
        .axis_iter(Axis(0))
        .zip(&test.labels)
        .filter(|(row, &y)| argmax(row.iter().copied()) == y)
        .count();
    Ok(Evaluation {
        accuracy: correct as f64 / test.len() as f64,
        loss: cross_entropy(&logits, &test.labels)?,
    })
}

/// What happened in one SyncFL or TimelyFL round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundOutcome {
    pub round: u64,
    pub start_s: f64,
    /// End of the probe phase (equal to `start_s` for SyncFL).
    pub probe_end_s: f64,
    pub end_s: f64,
    pub interval_s: Option<f64>,
    pub estimates: Vec<TimeEstimate>,
    pub schedules: Vec<Schedule>,
    pub assignments: Vec<Assignment>,
    pub participants: Vec<usize>,
}

/// Compute and transfer time of a task training `fraction` of the model for
/// `epochs` epochs.
fn task_duration(estimate: &TimeEstimate, epochs: usize, fraction: f64, noise: f64) -> (f64, f64) {
    let compute = epochs as f64 * fraction * estimate.t_cmp_unit * noise;
    let transfer = fraction * estimate.t_com_unit;
    (compute, transfer)
}

struct Task {
    update: ClientUpdate,
    epochs: usize,
}

pub struct Simulator<'a> {
    cfg: &'a RunConfig,
    env: &'a Environment,
    streams: Streams,
    clock: SimClock,
    queue: EventQueue,
    model: LayeredModel,
    aggregator: AggregatorState,
    records: Vec<AggregationRecord>,
    client_contributions: Vec<u64>,
    outcomes: OutcomeCounts,
    k: usize,
}

impl<'a> Simulator<'a> {
    pub fn new(cfg: &'a RunConfig, env: &'a Environment) -> Result<Self> {
        cfg.validate(env.population.len())?;
        let streams = Streams::new(cfg.run.seed);
        let mut dims = vec![env.feature_dim()];
        dims.extend(&cfg.model.hidden);
        dims.push(env.class_count());
        let model = LayeredModel::init(&dims, streams.seed_for(SERVER, 0, Purpose::ModelInit))?;
        Ok(Self {
            cfg,
            env,
            streams,
            clock: SimClock::default(),
            queue: EventQueue::new(),
            model,
            aggregator: AggregatorState::new(cfg.server.optimizer()),
            records: Vec::new(),
            client_contributions: vec![0; env.population.len()],
            outcomes: OutcomeCounts::default(),
            k: cfg.k(),
        })
    }

    pub fn model(&self) -> &LayeredModel {
        &self.model
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    fn payload_bytes(&self) -> f64 {
        self.model.param_count() as f64 * self.cfg.population.bytes_per_param
    }

    fn batches(&self, client: usize) -> usize {
        self.env.shards[client]
            .len()
            .div_ceil(self.cfg.train.batch_size)
    }

    fn capability(&self, client: usize, round: u64) -> RoundCapability {
        round_capability(
            &self.env.population[client],
            &self.streams,
            round,
            self.cfg.run.disturbance_std,
            self.cfg.run.noise_eta,
        )
    }

    /// One-batch probe: per-batch compute time under this round's disturbance
    /// and the resulting unit-time estimate.
    fn probe(&self, client: usize, cap: &RoundCapability) -> Result<(f64, TimeEstimate)> {
        let per_batch = effective_compute_time(&self.env.population[client], cap.disturbance_w);
        let progress = 1.0 / self.batches(client) as f64;
        let estimate = local_time_update(
            client,
            per_batch,
            progress,
            self.payload_bytes(),
            cap.bandwidth_bps,
        )?;
        Ok((per_batch, estimate))
    }

    fn shuffle_seed(&self, client: usize, round: u64) -> u64 {
        self.streams
            .seed_for(client as u64, round, Purpose::BatchShuffle)
    }

    fn sample_cohort(&self, round: u64) -> Vec<usize> {
        let mut rng = self.streams.stream(SERVER, round, Purpose::CohortSample);
        let mut cohort = index::sample(
            &mut rng,
            self.env.population.len(),
            self.cfg.run.concurrency,
        )
        .into_vec();
        cohort.sort_unstable();
        cohort
    }

    fn train_params(&self, epochs: usize) -> TrainParams {
        TrainParams {
            epochs,
            lr: self.cfg.train.lr,
            batch_size: self.cfg.train.batch_size,
        }
    }

    fn train_parallel(
        &self,
        jobs: &[(usize, usize, FreezeMask)],
        round: u64,
    ) -> Result<Vec<ClientUpdate>> {
        let model = &self.model;
        jobs.par_iter()
            .map(|&(client, epochs, mask)| {
                local_train(
                    model,
                    &self.env.shards[client],
                    self.train_params(epochs),
                    mask,
                    self.shuffle_seed(client, round),
                )
            })
            .collect()
    }

    fn should_evaluate(&self, aggregation: u64, last: bool) -> bool {
        last || aggregation % self.cfg.run.eval_every as u64 == 0
    }

    fn commit_aggregation(
        &mut self,
        updates: &[ClientUpdate],
        assignments: Vec<Assignment>,
        interval_s: Option<f64>,
        last: bool,
    ) -> Result<bool> {
        let merged = self.aggregator.aggregate(&self.model, updates)?;
        self.model = apply_update(&self.model, &merged)?;
        let mut participants: Vec<usize> = updates.iter().map(|u| u.client_id).collect();
        participants.sort_unstable();
        participants.dedup();
        for &c in &participants {
            self.client_contributions[c] += 1;
        }
        let round = self.records.len() as u64;
        let eval = if self.should_evaluate(round, last) {
            Some(evaluate(&self.model, &self.env.test)?)
        } else {
            None
        };
        let reached =
            matches!((eval, self.cfg.run.stop_accuracy), (Some(e), Some(t)) if e.accuracy >= t);
        self.records.push(AggregationRecord {
            round,
            time_s: self.clock.now(),
            eval,
            participants,
            assignments,
            interval_s,
        });
        Ok(reached)
    }

    fn record_initial(&mut self) -> Result<()> {
        let eval = evaluate(&self.model, &self.env.test)?;
        self.records.push(AggregationRecord {
            round: 0,
            time_s: 0.0,
            eval: Some(eval),
            participants: Vec::new(),
            assignments: Vec::new(),
            interval_s: None,
        });
        Ok(())
    }

    /// One synchronous round: every cohort member trains the full model and
    /// the round lasts until the slowest upload lands.
    pub fn sync_round(&mut self, round: u64, last: bool) -> Result<(RoundOutcome, bool)> {
        let start = self.clock.now();
        let cohort = self.sample_cohort(round);
        let epochs = self.cfg.train.local_epochs;
        let mut estimates = Vec::with_capacity(cohort.len());
        let mut caps = Vec::with_capacity(cohort.len());
        for &c in &cohort {
            let cap = self.capability(c, round);
            estimates.push(self.probe(c, &cap)?.1);
            caps.push(cap);
        }
        let jobs: Vec<_> = cohort
            .iter()
            .map(|&c| (c, epochs, FreezeMask::full()))
            .collect();
        let mut updates = self.train_parallel(&jobs, round)?;
        for ((update, est), cap) in updates.iter_mut().zip(&estimates).zip(&caps) {
            let (compute, transfer) = task_duration(est, epochs, 1.0, cap.compute_noise);
            let arrival = start + compute + transfer;
            update.arrival_time = arrival;
            self.queue.push(
                arrival,
                EventKind::UpdateArrival {
                    client: update.client_id,
                    task: round,
                },
            );
            self.outcomes.spawned += 1;
        }
        while let Some(event) = self.queue.pop() {
            self.clock.advance_to(event.time)?;
        }
        let assignments: Vec<Assignment> = cohort
            .iter()
            .map(|&c| Assignment {
                client_id: c,
                epochs,
                ratio: 1.0,
                trained_fraction: 1.0,
                staleness: 0,
                outcome: TaskOutcome::Aggregated,
            })
            .collect();
        for a in &assignments {
            self.outcomes.record(a.outcome);
        }
        let reached = self.commit_aggregation(&updates, assignments.clone(), None, last)?;
        Ok((
            RoundOutcome {
                round,
                start_s: start,
                probe_end_s: start,
                end_s: self.clock.now(),
                interval_s: None,
                estimates,
                schedules: Vec::new(),
                assignments,
                participants: cohort,
            },
            reached,
        ))
    }

    /// One TimelyFL round: probe, pick the `k`-th smallest unit total time as
    /// the interval, schedule every client into it, train, and aggregate what
    /// lands by the deadline.
    pub fn timelyfl_round(&mut self, round: u64, last: bool) -> Result<(RoundOutcome, bool)> {
        let start = self.clock.now();
        let cohort = self.sample_cohort(round);

        let mut estimates = Vec::with_capacity(cohort.len());
        let mut caps = Vec::with_capacity(cohort.len());
        for &c in &cohort {
            let cap = self.capability(c, round);
            let (probe_time, estimate) = self.probe(c, &cap)?;
            self.queue
                .push(start + probe_time, EventKind::ProbeReport { client: c });
            estimates.push(estimate);
            caps.push(cap);
        }
        while let Some(event) = self.queue.pop() {
            self.clock.advance_to(event.time)?;
        }
        let window_start = self.clock.now();

        let interval = aggregation_interval(&estimates, self.k)?;
        let schedules = estimates
            .iter()
            .map(|e| workload_schedule(interval, e, round))
            .collect::<Result<Vec<_>>>()?;
        for (s, e) in schedules.iter().zip(&estimates) {
            let lhs = utility_lhs(e, s.epochs, s.ratio);
            if lhs > interval * (1.0 + DEADLINE_SLACK) {
                return Err(Error::Invariant(format!(
                    "client {} scheduled {lhs} s of work into a {interval} s interval",
                    s.client_id
                )));
            }
            if s.ratio < 1.0 && (s.report_deadline - s.ratio * e.t_cmp_unit).abs() > 1e-9 * interval
            {
                return Err(Error::Invariant(format!(
                    "client {} report deadline {} differs from ratio * t_cmp",
                    s.client_id, s.report_deadline
                )));
            }
        }

        let masks: Vec<FreezeMask> = schedules
            .iter()
            .map(|s| ratio_to_mask(s.ratio, &self.model))
            .collect();
        let jobs: Vec<_> = schedules
            .iter()
            .zip(&masks)
            .map(|(s, &m)| (s.client_id, s.epochs, m))
            .collect();
        let trained = self.train_parallel(&jobs, round)?;

        let deadline = window_start + interval;
        let mut pending: BTreeMap<usize, (ClientUpdate, Assignment)> = BTreeMap::new();
        for (i, mut update) in trained.into_iter().enumerate() {
            let (s, e, cap) = (&schedules[i], &estimates[i], &caps[i]);
            let fraction = self.model.trainable_fraction(masks[i]);
            let (compute, transfer) = task_duration(e, s.epochs, fraction, cap.compute_noise);
            let offset = compute + transfer;
            let arrival = if offset <= interval * (1.0 + DEADLINE_SLACK) {
                window_start + offset.min(interval)
            } else {
                window_start + offset
            };
            update.arrival_time = arrival;
            self.queue.push(
                arrival,
                EventKind::UpdateArrival {
                    client: s.client_id,
                    task: round,
                },
            );
            self.outcomes.spawned += 1;
            let assignment = Assignment {
                client_id: s.client_id,
                epochs: s.epochs,
                ratio: s.ratio,
                trained_fraction: fraction,
                staleness: 0,
                outcome: TaskOutcome::LateDropped,
            };
            pending.insert(s.client_id, (update, assignment));
        }
        // pushed last so arrivals exactly on the deadline are processed first
        self.queue.push(deadline, EventKind::AggregationDeadline);

        let mut accepted = Vec::new();
        let mut assignments = Vec::new();
        while let Some(event) = self.queue.pop() {
            match event.kind {
                EventKind::UpdateArrival { client, .. } => {
                    self.clock.advance_to(event.time)?;
                    let (update, mut assignment) =
                        pending.remove(&client).expect("one arrival per client");
                    assignment.outcome = TaskOutcome::Aggregated;
                    accepted.push(update);
                    assignments.push(assignment);
                }
                EventKind::AggregationDeadline => {
                    self.clock.advance_to(event.time)?;
                    // late uploads are dropped without moving the clock past the deadline
                    for late in self.queue.drain_ordered() {
                        if let EventKind::UpdateArrival { client, .. } = late.kind {
                            let (_, assignment) =
                                pending.remove(&client).expect("one arrival per client");
                            assignments.push(assignment);
                        }
                    }
                    break;
                }
                other => {
                    return Err(Error::Invariant(format!(
                        "unexpected event {other:?} in training window"
                    )))
                }
            }
        }
        assignments.sort_by_key(|a| a.client_id);
        for a in &assignments {
            self.outcomes.record(a.outcome);
        }
        let participants: Vec<usize> = accepted.iter().map(|u| u.client_id).collect();
        let reached =
            self.commit_aggregation(&accepted, assignments.clone(), Some(interval), last)?;
        let mut participants = participants;
        participants.sort_unstable();
        Ok((
            RoundOutcome {
                round,
                start_s: start,
                probe_end_s: window_start,
                end_s: self.clock.now(),
                interval_s: Some(interval),
                estimates,
                schedules,
                assignments,
                participants,
            },
            reached,
        ))
    }

    fn run_rounds(&mut self) -> Result<()> {
        let rounds = self.cfg.run.rounds as u64;
        for round in 0..rounds {
            let last = round + 1 == rounds;
            let (_, reached) = match self.cfg.run.protocol {
                Protocol::Sync => self.sync_round(round, last)?,
                Protocol::TimelyFl => self.timelyfl_round(round, last)?,
                Protocol::FedBuff => unreachable!("fedbuff is event driven"),
            };
            if reached {
                self.ensure_last_evaluated()?;
                break;
            }
        }
        Ok(())
    }

    fn ensure_last_evaluated(&mut self) -> Result<()> {
        if let Some(last) = self.records.last_mut() {
            if last.eval.is_none() {
                last.eval = Some(evaluate(&self.model, &self.env.test)?);
            }
        }
        Ok(())
    }

    /// FedBuff: `n` clients train concurrently; arrivals are admitted into the
    /// buffer and an aggregation fires whenever it holds `K` updates. A finished
    /// client is replaced immediately by a uniformly sampled idle client.
    fn run_fedbuff(&mut self) -> Result<()> {
        let target = self.cfg.run.rounds;
        if target == 0 {
            return Ok(());
        }
        let population = self.env.population.len();
        let mut buffer = BuffServerState::new(self.k, self.cfg.server.staleness_cap);
        let mut busy = vec![false; population];
        let mut task_index = vec![0u64; population];
        let mut tasks: BTreeMap<u64, Task> = BTreeMap::new();
        let mut buffered_meta: Vec<Assignment> = Vec::new();
        let mut spawn_counter = 0u64;
        let mut next_task = 0u64;
        let epochs = self.cfg.train.local_epochs;

        let mut spawn = |sim: &mut Self,
                         busy: &mut Vec<bool>,
                         task_index: &mut Vec<u64>,
                         tasks: &mut BTreeMap<u64, Task>|
         -> Result<()> {
            let idle: Vec<usize> = (0..population).filter(|&c| !busy[c]).collect();
            if idle.is_empty() {
                return Err(Error::Invariant("no idle client to spawn".into()));
            }
            let mut rng = sim
                .streams
                .stream(SERVER, spawn_counter, Purpose::CohortSample);
            spawn_counter += 1;
            let client = idle[rng.random_range(0..idle.len())];
            busy[client] = true;
            let j = task_index[client];
            task_index[client] += 1;

            let cap = sim.capability(client, j);
            let (_, estimate) = sim.probe(client, &cap)?;
            let (compute, transfer) = task_duration(&estimate, epochs, 1.0, cap.compute_noise);
            let mut update = local_train(
                &sim.model,
                &sim.env.shards[client],
                sim.train_params(epochs),
                FreezeMask::full(),
                sim.shuffle_seed(client, j),
            )?;
            let arrival = sim.clock.now() + compute + transfer;
            update.arrival_time = arrival;
            let id = next_task;
            next_task += 1;
            sim.queue
                .push(arrival, EventKind::UpdateArrival { client, task: id });
            tasks.insert(id, Task { update, epochs });
            sim.outcomes.spawned += 1;
            Ok(())
        };

        for _ in 0..self.cfg.run.concurrency {
            spawn(self, &mut busy, &mut task_index, &mut tasks)?;
        }

        while let Some(event) = self.queue.pop() {
            self.clock.advance_to(event.time)?;
            match event.kind {
                EventKind::UpdateArrival { client, task } => {
                    busy[client] = false;
                    let Task { update, epochs } =
                        tasks.remove(&task).expect("arrival for a live task");
                    let version = self.model.version();
                    let mut assignment = Assignment {
                        client_id: client,
                        epochs,
                        ratio: 1.0,
                        trained_fraction: 1.0,
                        staleness: 0,
                        outcome: TaskOutcome::Pending,
                    };
                    match buffer.admit(update, version) {
                        Admission::Discarded { staleness } => {
                            log::debug!(
                                "client {client}: update {staleness} versions old discarded"
                            );
                            self.outcomes.record(TaskOutcome::StaleDiscarded);
                        }
                        Admission::Buffered { staleness } => {
                            assignment.staleness = staleness;
                            buffered_meta.push(assignment);
                        }
                        Admission::AggregateNow { staleness } => {
                            assignment.staleness = staleness;
                            buffered_meta.push(assignment);
                            let updates = buffer.drain();
                            let mut assignments = std::mem::take(&mut buffered_meta);
                            for a in &mut assignments {
                                a.outcome = TaskOutcome::Aggregated;
                                self.outcomes.record(a.outcome);
                            }
                            assignments.sort_by_key(|a| a.client_id);
                            let done = self.aggregation_count() + 1 >= target;
                            let reached =
                                self.commit_aggregation(&updates, assignments, None, done)?;
                            if reached {
                                self.ensure_last_evaluated()?;
                            }
                            if done || reached {
                                break;
                            }
                        }
                    }
                    self.queue.push(self.clock.now(), EventKind::ClientSpawn);
                }
                EventKind::ClientSpawn => spawn(self, &mut busy, &mut task_index, &mut tasks)?,
                other => {
                    return Err(Error::Invariant(format!(
                        "unexpected event {other:?} in fedbuff loop"
                    )))
                }
            }
        }
        // in-flight and still-buffered work at termination
        for _ in 0..(tasks.len() + buffered_meta.len()) {
            self.outcomes.record(TaskOutcome::Pending);
        }
        self.queue = EventQueue::new();
        Ok(())
    }

    fn aggregation_count(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn run(mut self) -> Result<RunLog> {
        self.record_initial()?;
        match self.cfg.run.protocol {
            Protocol::FedBuff => self.run_fedbuff()?,
            Protocol::Sync | Protocol::TimelyFl => self.run_rounds()?,
        }
        if self.outcomes.spawned != self.outcomes.resolved() {
            return Err(Error::Invariant(format!(
                "{} tasks spawned but {} resolved",
                self.outcomes.spawned,
                self.outcomes.resolved()
            )));
        }
        Ok(RunLog {
            protocol: self.cfg.run.protocol,
            population_size: self.env.population.len(),
            records: self.records,
            client_contributions: self.client_contributions,
            outcomes: self.outcomes,
            final_model: self.model,
        })
    }
}

/// Runs one configured experiment against a prepared environment.
pub fn run(cfg: &RunConfig, env: &Environment) -> Result<RunLog> {
    Simulator::new(cfg, env)?.run()
}
