use fedsim::config::RunConfig;
use fedsim::data::{generate_synthetic, partition_even, Dataset};
use fedsim::device::DeviceProfile;
use fedsim::metrics::participation;
use fedsim::model::{Activation, Layer, LayeredModel};
use fedsim::sim::{evaluate, Environment, Simulator, TaskOutcome};
use fedsim::{run, Error, Protocol};
use ndarray::{array, Array1, Array2};

/// Three clients with ten samples each (two batches of five) and a 17
/// parameter model, so every time below can be worked out by hand.
fn toy_env(compute: [f64; 3], bandwidth: [f64; 3]) -> Environment {
    let split = generate_synthetic(2, 2, 19, 1).unwrap();
    let shards = partition_even(&split.train, 3).unwrap();
    let population = (0..3)
        .map(|c| DeviceProfile::new(c, compute[c], vec![bandwidth[c]]).unwrap())
        .collect();
    Environment::new(population, shards, split.test).unwrap()
}

fn toy_cfg(protocol: Protocol) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.run.protocol = protocol;
    cfg.run.rounds = 3;
    cfg.run.concurrency = 3;
    cfg.run.disturbance_std = 0.0;
    cfg.model.hidden = vec![3];
    cfg.train.batch_size = 5;
    cfg
}

fn small_cfg(protocol: Protocol, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.run.protocol = protocol;
    cfg.run.seed = seed;
    cfg.run.rounds = 25;
    cfg.run.concurrency = 12;
    cfg.data.classes = 4;
    cfg.data.samples_per_class = 60;
    cfg.population.clients = 16;
    cfg
}

#[test]
fn zero_rounds_record_only_the_initial_evaluation() {
    for protocol in Protocol::ALL {
        let mut cfg = small_cfg(protocol, 0);
        cfg.run.rounds = 0;
        let env = Environment::build(&cfg).unwrap();
        let log = run(&cfg, &env).unwrap();
        assert_eq!(log.aggregation_count(), 0);
        assert_eq!(log.records.len(), 1);
        assert!(log.records[0].eval.is_some());
        assert_eq!(log.final_time(), 0.0);
        assert_eq!(log.outcomes.spawned, 0);
    }
}

#[test]
fn sync_round_lasts_until_the_slowest_upload() {
    let env = toy_env([0.1, 0.2, 0.4], [1000.0, 2000.0, 500.0]);
    let mut cfg = toy_cfg(Protocol::Sync);
    cfg.train.local_epochs = 2;
    let log = run(&cfg, &env).unwrap();
    // slowest: 2 epochs * 2 batches * 0.4 s + 17 params * 4 B / 500 B/s
    let round = 2.0 * 2.0 * 0.4 + 68.0 / 500.0;
    let times: Vec<f64> = log.records.iter().map(|r| r.time_s).collect();
    assert_eq!(times.len(), 4);
    for (i, t) in times.iter().enumerate() {
        assert!((t - i as f64 * round).abs() < 1e-12, "record {i} at {t}");
    }
    assert!(log
        .aggregations()
        .iter()
        .all(|r| r.participants == [0, 1, 2]));
}

#[test]
fn timelyfl_round_is_probe_plus_interval() {
    let env = toy_env([0.1, 0.2, 0.4], [1000.0, 2000.0, 500.0]);
    let mut cfg = toy_cfg(Protocol::TimelyFl);
    cfg.run.k = Some(2);
    let mut sim = Simulator::new(&cfg, &env).unwrap();
    let (outcome, _) = sim.timelyfl_round(0, true).unwrap();
    // unit totals 0.268, 0.434, 0.936; the second smallest is the interval
    let interval = 0.4 + 68.0 / 2000.0;
    assert!((outcome.interval_s.unwrap() - interval).abs() < 1e-12);
    assert!((outcome.probe_end_s - 0.4).abs() < 1e-12);
    assert!((outcome.end_s - (0.4 + interval)).abs() < 1e-12);
    let epochs: Vec<usize> = outcome.schedules.iter().map(|s| s.epochs).collect();
    // (0.434 - 0.068) / 0.2 fits one whole epoch for the fastest client
    assert_eq!(epochs, [1, 1, 1]);
    assert_eq!(outcome.schedules[1].ratio, 1.0);
    assert!((outcome.schedules[2].ratio - interval / 0.936).abs() < 1e-12);
    // the output layer alone is 8/17 of the model, more than client 2's
    // ratio, so its smallest possible workload overruns the interval
    assert_eq!(outcome.participants, [0, 1]);
    let slow = &outcome.assignments[2];
    assert_eq!(slow.outcome, TaskOutcome::LateDropped);
    assert!((slow.trained_fraction - 8.0 / 17.0).abs() < 1e-12);
}

#[test]
fn single_client_trains_the_whole_model_in_its_own_time() {
    let env = toy_env([0.1, 0.2, 0.4], [1000.0, 2000.0, 500.0]);
    let mut cfg = toy_cfg(Protocol::TimelyFl);
    cfg.run.concurrency = 1;
    let mut sim = Simulator::new(&cfg, &env).unwrap();
    for round in 0..5 {
        let (outcome, _) = sim.timelyfl_round(round, false).unwrap();
        let (s, e) = (outcome.schedules[0], outcome.estimates[0]);
        assert_eq!(outcome.interval_s, Some(e.t_total_unit));
        assert_eq!((s.epochs, s.ratio), (1, 1.0));
        assert_eq!(outcome.participants.len(), 1);
    }
}

#[test]
fn identical_devices_get_identical_plans() {
    let env = toy_env([0.3; 3], [800.0; 3]);
    let cfg = toy_cfg(Protocol::TimelyFl);
    let mut sim = Simulator::new(&cfg, &env).unwrap();
    let (outcome, _) = sim.timelyfl_round(0, true).unwrap();
    assert!(outcome
        .schedules
        .iter()
        .all(|s| s.ratio == 1.0 && s.epochs == 1));
}

#[test]
fn repeated_runs_are_identical() {
    for protocol in Protocol::ALL {
        let mut cfg = small_cfg(protocol, 3);
        cfg.run.noise_eta = 0.3;
        let a = run(&cfg, &Environment::build(&cfg).unwrap()).unwrap();
        let b = run(&cfg, &Environment::build(&cfg).unwrap()).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.assignments_csv(), b.assignments_csv());
        assert_eq!(a.final_model, b.final_model);
    }
}

#[test]
fn every_task_is_accounted_for() {
    for protocol in Protocol::ALL {
        let mut cfg = small_cfg(protocol, 1);
        cfg.run.noise_eta = 0.5;
        let env = Environment::build(&cfg).unwrap();
        let log = run(&cfg, &env).unwrap();
        let o = log.outcomes;
        assert_eq!(
            o.spawned,
            o.aggregated + o.late_dropped + o.stale_discarded + o.pending
        );
        let recorded: u64 = log
            .aggregations()
            .iter()
            .flat_map(|r| &r.assignments)
            .filter(|a| a.outcome == TaskOutcome::Aggregated)
            .count() as u64;
        assert_eq!(recorded, o.aggregated);
        if protocol != Protocol::FedBuff {
            assert_eq!(o.pending, 0);
            assert_eq!(o.stale_discarded, 0);
        }
        if protocol == Protocol::Sync {
            assert_eq!(o.late_dropped, 0);
        }
    }
}

#[test]
fn fedbuff_aggregates_every_k_admitted_updates() {
    let mut cfg = small_cfg(Protocol::FedBuff, 2);
    cfg.run.k = Some(5);
    cfg.server.staleness_cap = 2;
    let env = Environment::build(&cfg).unwrap();
    let log = run(&cfg, &env).unwrap();
    assert_eq!(log.aggregation_count(), 25);
    assert_eq!(log.outcomes.aggregated, 25 * 5);
    assert!(log.outcomes.stale_discarded > 0);
    let sizes: Vec<usize> = log
        .aggregations()
        .iter()
        .map(|r| r.assignments.len())
        .collect();
    assert!(sizes.iter().all(|&n| n == 5));
    assert!(log
        .aggregations()
        .iter()
        .all(|r| r.assignments.iter().all(|a| a.staleness <= 2)));
}

#[test]
fn clock_never_runs_backwards() {
    for protocol in Protocol::ALL {
        let mut cfg = small_cfg(protocol, 4);
        cfg.run.noise_eta = 0.4;
        let log = run(&cfg, &Environment::build(&cfg).unwrap()).unwrap();
        let times: Vec<f64> = log.aggregations().iter().map(|r| r.time_s).collect();
        assert!(
            times.windows(2).all(|w| w[0] <= w[1]),
            "{protocol}: {times:?}"
        );
    }
}

#[test]
fn participation_counters_agree() {
    for protocol in Protocol::ALL {
        let cfg = small_cfg(protocol, 5);
        let env = Environment::build(&cfg).unwrap();
        let log = run(&cfg, &env).unwrap();
        let report = participation(&log, env.population.len());
        assert_eq!(report.contributions, log.client_contributions);
        let seats: usize = log
            .aggregations()
            .iter()
            .map(|r| r.participants.len())
            .sum();
        assert_eq!(report.contributions.iter().sum::<u64>() as usize, seats);
        assert_eq!(report.histogram.iter().sum::<usize>(), env.population.len());
        assert!((0.0..=1.0).contains(&report.mean_rate));
    }
}

#[test]
fn exact_estimates_let_every_timelyfl_client_in() {
    let mut cfg = small_cfg(Protocol::TimelyFl, 6);
    cfg.run.concurrency = 16;
    let env = Environment::build(&cfg).unwrap();
    let log = run(&cfg, &env).unwrap();
    let report = participation(&log, 16);
    assert!(
        report.per_client_rate.iter().all(|&r| r == 1.0),
        "{:?}",
        report.per_client_rate
    );
    assert_eq!(log.outcomes.late_dropped, 0);
}

#[test]
fn noisy_compute_makes_some_timelyfl_uploads_late() {
    let mut cfg = small_cfg(Protocol::TimelyFl, 7);
    cfg.run.noise_eta = 0.5;
    let env = Environment::build(&cfg).unwrap();
    let log = run(&cfg, &env).unwrap();
    assert!(log.outcomes.late_dropped > 0);
    for r in log.aggregations() {
        let late: Vec<usize> = r
            .assignments
            .iter()
            .filter(|a| a.outcome == TaskOutcome::LateDropped)
            .map(|a| a.client_id)
            .collect();
        assert!(late.iter().all(|c| !r.participants.contains(c)));
    }
}

#[test]
fn early_stop_and_thinned_evaluation() {
    let mut cfg = small_cfg(Protocol::Sync, 8);
    cfg.run.eval_every = 4;
    cfg.run.rounds = 10;
    let log = run(&cfg, &Environment::build(&cfg).unwrap()).unwrap();
    let evaluated: Vec<u64> = log
        .records
        .iter()
        .filter(|r| r.eval.is_some())
        .map(|r| r.round)
        .collect();
    assert_eq!(evaluated, [0, 4, 8, 10]);

    cfg.run.eval_every = 1;
    cfg.run.rounds = 200;
    cfg.run.stop_accuracy = Some(0.5);
    let log = run(&cfg, &Environment::build(&cfg).unwrap()).unwrap();
    assert!(log.aggregation_count() < 200);
    assert!(log.final_accuracy().unwrap() >= 0.5);
}

#[test]
fn oversized_cohort_is_rejected_before_running() {
    let mut cfg = small_cfg(Protocol::Sync, 0);
    cfg.run.concurrency = 17;
    let env = Environment::build(&cfg).unwrap();
    assert!(matches!(run(&cfg, &env), Err(Error::Validation(_))));
}

fn labelled(features: Array2<f64>, labels: Vec<usize>, classes: usize) -> Dataset {
    Dataset::new(features, labels, classes).unwrap()
}

#[test]
fn evaluation_of_degenerate_and_perfect_models() {
    let features = array![
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 0.0]
    ];
    let test = labelled(features, vec![0, 1, 2, 1], 3);

    let zero = LayeredModel::new(vec![Layer::zeros(3, 3, Activation::SoftmaxHead)], 0).unwrap();
    let e = evaluate(&zero, &test).unwrap();
    assert_eq!(e.accuracy, 0.25);
    assert!((e.loss - 3f64.ln()).abs() < 1e-12);

    let memorise = Layer::new(Array2::eye(3), Array1::zeros(3), Activation::SoftmaxHead).unwrap();
    let perfect = LayeredModel::new(vec![memorise], 0).unwrap();
    assert_eq!(evaluate(&perfect, &test).unwrap().accuracy, 1.0);
}
