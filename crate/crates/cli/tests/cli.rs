use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: [&str; 12] = [
    "--rounds",
    "5",
    "--concurrency",
    "6",
    "--clients",
    "8",
    "--classes",
    "3",
    "--samples-per-class",
    "30",
    "--hidden",
    "8",
];

fn fedsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedsim"))
        .args(args)
        .env_remove("FEDSIM_OUTPUT_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn with_small<'a>(head: &[&'a str]) -> Vec<&'a str> {
    let mut v = head.to_vec();
    v.extend(SMALL);
    v
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn run_writes_every_artifact_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    let args = with_small(&["run", "--protocol", "timelyfl", "--output-dir", out_s]);
    let first = fedsim(&args);
    assert!(
        first.status.success(),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );

    let names = [
        "runlog.csv",
        "curve.csv",
        "participation.csv",
        "assignments.csv",
        "model.ckpt",
        "config.resolved.toml",
        "manifest.json",
    ];
    let before: Vec<String> = names.iter().map(|n| read(&out.join(n))).collect();
    assert!(before[0].starts_with("time_s,round,accuracy,loss,n_participants\n"));
    assert_eq!(before[0].lines().count(), 1 + 6);
    assert!(before[2].starts_with("client_id,contributions,total_aggs,rate\n"));
    let manifest: serde_json::Value = serde_json::from_str(&before[6]).unwrap();
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["aggregations"], 5);

    assert!(fedsim(&args).status.success());
    let after: Vec<String> = names.iter().map(|n| read(&out.join(n))).collect();
    assert_eq!(before, after);
}

#[test]
fn resolved_snapshot_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let args = with_small(&[
        "run",
        "--protocol",
        "fedbuff",
        "--noise-eta",
        "0.2",
        "-o",
        a.to_str().unwrap(),
    ]);
    assert!(fedsim(&args).status.success());
    let snapshot = a.join("config.resolved.toml");
    let again = fedsim(&[
        "run",
        "--config",
        snapshot.to_str().unwrap(),
        "-o",
        b.to_str().unwrap(),
    ]);
    assert!(
        again.status.success(),
        "{}",
        String::from_utf8_lossy(&again.stderr)
    );
    for name in ["runlog.csv", "assignments.csv", "model.ckpt"] {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    fs::write(
        &cfg,
        "[run]\nseed = 3\nrounds = 2\nconcurrency = 4\n\n[population]\nclients = 6\n\n[data]\nclasses = 3\nsamples_per_class = 20\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let res = fedsim(&[
        "run",
        "-c",
        cfg.to_str().unwrap(),
        "--seed",
        "4",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let resolved = read(&out.join("config.resolved.toml"));
    assert!(resolved.contains("seed = 4"));
    assert!(resolved.contains("rounds = 2"));
    // k defaults to half the concurrency, rounded up
    assert!(resolved.contains("k = 2"));
}

#[test]
fn output_dir_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("from-env");
    let status = Command::new(env!("CARGO_BIN_EXE_fedsim"))
        .args(with_small(&["run"]))
        .env("FEDSIM_OUTPUT_DIR", &out)
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("runlog.csv").is_file());
}

#[test]
fn invalid_settings_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let res = fedsim(&with_small(&[
        "run",
        "-k",
        "7",
        "-o",
        out.to_str().unwrap(),
    ]));
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("k = 7"));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[run]\nrouns = 3\n").unwrap();
    assert_eq!(
        fedsim(&["run", "-c", bad.to_str().unwrap()]).status.code(),
        Some(1)
    );
    assert_eq!(
        fedsim(&["run", "--protocol", "gossip"]).status.code(),
        Some(1)
    );
}

#[test]
fn missing_inputs_fail_fast_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let missing = tmp.path().join("nope.csv");
    let res = fedsim(&with_small(&[
        "run",
        "--trace-path",
        missing.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]));
    assert_eq!(res.status.code(), Some(2));
    assert!(
        !out.exists(),
        "nothing may be written before the inputs are checked"
    );

    let cfg = tmp.path().join("absent.toml");
    assert_eq!(
        fedsim(&["run", "-c", cfg.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn unwritable_output_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let res = fedsim(&with_small(&[
        "run",
        "-o",
        blocker.join("out").to_str().unwrap(),
    ]));
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn compare_tabulates_every_protocol() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cmp");
    let res = fedsim(&with_small(&[
        "compare",
        "--targets",
        "0.4,0.99",
        "-o",
        out.to_str().unwrap(),
    ]));
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let table = read(&out.join("comparison.csv"));
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "strategy,target,time_s,ratio");
    assert_eq!(lines.len(), 1 + 3 * 2);
    for p in ["sync", "fedbuff", "timelyfl"] {
        assert!(out.join(p).join("runlog.csv").is_file());
        assert!(lines
            .iter()
            .any(|l| l.starts_with(&format!("{p},acc>=0.4,"))));
    }
    assert_eq!(String::from_utf8_lossy(&res.stdout), table);
}

#[test]
fn sweep_over_k_writes_one_block_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let res = fedsim(&with_small(&[
        "sweep",
        "--over",
        "k",
        "--values",
        "2,4",
        "--protocols",
        "fedbuff,timelyfl",
        "--targets",
        "0.5",
        "-o",
        out.to_str().unwrap(),
    ]));
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let table = read(&out.join("sweep.csv"));
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "param,value,strategy,target,time_s,ratio");
    assert_eq!(lines.len(), 1 + 2 * 2);
    assert!(lines[1].starts_with("k,2,fedbuff,acc>=0.5,"));
    assert!(out
        .join("k-4")
        .join("timelyfl")
        .join("config.resolved.toml")
        .is_file());

    let bad = fedsim(&with_small(&["sweep", "--over", "k", "--values", "1.5"]));
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn population_dump_feeds_a_trace_driven_run() {
    let tmp = tempfile::tempdir().unwrap();
    let traces = tmp.path().join("pop").join("traces.csv");
    let res = fedsim(&[
        "population",
        "--clients",
        "8",
        "--out",
        traces.to_str().unwrap(),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let text = read(&traces);
    assert!(text.starts_with("client_id,base_compute_s_per_batch,"));
    assert_eq!(text.lines().count(), 1 + 8);

    // the dumped population is exactly the one a synthetic run would use
    let synth = tmp.path().join("synth");
    let traced = tmp.path().join("traced");
    assert!(fedsim(&with_small(&["run", "-o", synth.to_str().unwrap()]))
        .status
        .success());
    let res = fedsim(&with_small(&[
        "run",
        "--trace-path",
        traces.to_str().unwrap(),
        "-o",
        traced.to_str().unwrap(),
    ]));
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert_eq!(
        read(&synth.join("runlog.csv")),
        read(&traced.join("runlog.csv"))
    );
}

#[test]
fn help_and_version_succeed() {
    assert!(fedsim(&["--help"]).status.success());
    let v = fedsim(&["--version"]);
    assert!(v.status.success());
    assert!(String::from_utf8_lossy(&v.stdout).contains(env!("CARGO_PKG_VERSION")));
}
