use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use fedsim::device::{synth_population, write_traces};
use fedsim::metrics::{compare_logs, curve_csv, participation, ComparisonTable, Target};
use fedsim::model::write_checkpoint;
use fedsim::protocol::Protocol;
use fedsim::rng::{Purpose, Streams, SERVER};
use fedsim::{Environment, RunConfig, RunLog};
use serde_json::json;

use crate::args::SweepParam;

pub const RUN_ARTIFACTS: [&str; 7] = [
    "runlog.csv",
    "curve.csv",
    "participation.csv",
    "assignments.csv",
    "model.ckpt",
    "config.resolved.toml",
    "manifest.json",
];

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| fedsim::Error::Io { path, source: e })?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| fedsim::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn manifest(cfg: &RunConfig, extra: serde_json::Value) -> String {
    let mut m = json!({
        "tool": "fedsim",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.run.seed,
    });
    if let (Some(m), Some(extra)) = (m.as_object_mut(), extra.as_object()) {
        m.extend(extra.clone());
    }
    let mut text = serde_json::to_string_pretty(&m).expect("manifest serialises");
    text.push('\n');
    text
}

fn write_run(dir: &Path, cfg: &RunConfig, env: &Environment, log: &RunLog) -> Result<()> {
    create_dir(dir)?;
    write(dir, "runlog.csv", &log.to_csv())?;
    write(dir, "curve.csv", &curve_csv(log))?;
    write(
        dir,
        "participation.csv",
        &participation(log, env.population.len()).to_csv(),
    )?;
    write(dir, "assignments.csv", &log.assignments_csv())?;
    write_checkpoint(&log.final_model, &dir.join("model.ckpt"))?;
    write(
        dir,
        "config.resolved.toml",
        &cfg.resolved().to_toml_string(),
    )?;
    let summary = json!({
        "protocol": cfg.run.protocol.name(),
        "aggregations": log.aggregation_count(),
        "final_time_s": log.final_time(),
        "final_accuracy": log.final_accuracy(),
        "artifacts": RUN_ARTIFACTS,
    });
    write(dir, "manifest.json", &manifest(cfg, summary))
}

fn simulate(cfg: &RunConfig, env: &Environment) -> Result<RunLog> {
    log::info!(
        "{}: {} rounds, n = {}, k = {}, seed {}",
        cfg.run.protocol,
        cfg.run.rounds,
        cfg.run.concurrency,
        cfg.k(),
        cfg.run.seed
    );
    let log = fedsim::run(cfg, env)?;
    log::info!(
        "{}: {} aggregations in {:.1} simulated s, final accuracy {:.4}",
        cfg.run.protocol,
        log.aggregation_count(),
        log.final_time(),
        log.final_accuracy().unwrap_or(f64::NAN)
    );
    Ok(log)
}

fn build_env(cfg: &RunConfig) -> Result<Environment> {
    let env = Environment::build(cfg)?;
    cfg.validate(env.population.len())?;
    Ok(env)
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let env = build_env(cfg)?;
    let log = simulate(cfg, &env)?;
    write_run(&cfg.output.dir, cfg, &env, &log)?;
    log::info!("artifacts in {}", cfg.output.dir.display());
    Ok(())
}

fn compare_into(dir: &Path, cfg: &RunConfig, protocols: &[Protocol]) -> Result<ComparisonTable> {
    if protocols.len() < 2 {
        bail!(fedsim::Error::Validation(
            "compare needs at least two protocols".into()
        ));
    }
    let env = build_env(cfg)?;
    let mut logs = Vec::with_capacity(protocols.len());
    for &p in protocols {
        let mut one = cfg.clone();
        one.run.protocol = p;
        one.output.dir = dir.join(p.name());
        let log = simulate(&one, &env)?;
        write_run(&one.output.dir, &one, &env, &log)?;
        logs.push((p.name().to_string(), log));
    }
    let named: Vec<(String, &RunLog)> = logs.iter().map(|(n, l)| (n.clone(), l)).collect();
    let targets: Vec<Target> = cfg
        .run
        .targets
        .iter()
        .map(|&t| Target::Accuracy(t))
        .collect();
    let table = compare_logs(&named, &targets);
    write(dir, "comparison.csv", &table.to_csv())?;
    write(
        dir,
        "config.resolved.toml",
        &cfg.resolved().to_toml_string(),
    )?;
    let names: Vec<&str> = protocols.iter().map(|p| p.name()).collect();
    write(
        dir,
        "manifest.json",
        &manifest(cfg, json!({ "protocols": names })),
    )?;
    Ok(table)
}

pub fn compare(cfg: &RunConfig, protocols: &[Protocol]) -> Result<()> {
    create_dir(&cfg.output.dir)?;
    let table = compare_into(&cfg.output.dir, cfg, protocols)?;
    print!("{}", table.to_csv());
    Ok(())
}

pub fn sweep(
    cfg: &RunConfig,
    protocols: &[Protocol],
    over: SweepParam,
    values: &[f64],
) -> Result<()> {
    let mut rows = String::from("param,value,strategy,target,time_s,ratio\n");
    create_dir(&cfg.output.dir)?;
    for &value in values {
        let mut point = cfg.clone();
        match over {
            SweepParam::DataAlpha => point.data.data_alpha = value,
            SweepParam::K => {
                if value.fract() != 0.0 || value < 1.0 {
                    bail!(fedsim::Error::Validation(format!(
                        "k = {value} is not a positive integer"
                    )));
                }
                point.run.k = Some(value as usize);
            }
        }
        let dir = cfg.output.dir.join(format!("{}-{value}", over.name()));
        create_dir(&dir)?;
        point.output.dir = dir.clone();
        let table = compare_into(&dir, &point, protocols)?;
        for line in table.to_csv().lines().skip(1) {
            rows.push_str(&format!("{},{value},{line}\n", over.name()));
        }
    }
    write(&cfg.output.dir, "sweep.csv", &rows)?;
    print!("{rows}");
    Ok(())
}

/// Writes the population a run with this config would synthesise.
pub fn population(cfg: &RunConfig, out: &Path) -> Result<()> {
    let seed = Streams::new(cfg.run.seed).seed_for(SERVER, 0, Purpose::Population);
    let profiles = synth_population(&cfg.population.spec(), seed)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_traces(&profiles, out).with_context(|| format!("writing {}", out.display()))?;
    log::info!("{} clients written to {}", profiles.len(), out.display());
    Ok(())
}
