mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};

/// Exit status for a failure: 1 bad input, 2 I/O, 3 internal.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<fedsim::Error>() {
            return match e {
                fedsim::Error::Validation(_)
                | fedsim::Error::Parse { .. }
                | fedsim::Error::Structural(_) => 1,
                fedsim::Error::Io { .. } => 2,
                fedsim::Error::Invariant(_) | fedsim::Error::Numeric(_) => 3,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    3
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(config) => commands::run(&config.load()?),
        Command::Compare { config, protocols } => commands::compare(&config.load()?, &protocols),
        Command::Sweep {
            config,
            protocols,
            over,
            values,
        } => commands::sweep(&config.load()?, &protocols, over, &values),
        Command::Population { config, out } => commands::population(&config.load()?, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
