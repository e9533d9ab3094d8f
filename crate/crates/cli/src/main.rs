//! `slrl`: train, sweep, ablate, gradcheck, synth and eval from the command line.

mod args;
mod commands;
mod error;
mod manifest;
mod project;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, FormatArg, TrainArgs};
use error::{CliError, CliResult};
use manifest::{DataSource, Invocation, RunManifest};

const THREADS_VAR: &str = "SLRL_THREADS";

fn init_threads() -> CliResult {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("{THREADS_VAR} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Failed(e.into()))
}

fn training_invocation(
    args: &TrainArgs,
    command: &str,
    make: impl FnOnce(DataSource, slrl_core::train::TrainConfig, usize) -> Invocation,
) -> CliResult<Invocation> {
    let config = args.model.config()?;
    let data = args
        .data
        .source(config.seed)?
        .ok_or_else(|| CliError::usage(format!("{command} needs --data DIR or --synth CxN")))?;
    Ok(make(data, config, args.repeats))
}

fn run(cli: Cli) -> CliResult {
    init_threads()?;
    match cli.command {
        Command::Train(a) => {
            let inv = training_invocation(&a, "train", |data, config, repeats| Invocation::Train { data, config, repeats })?;
            commands::execute(inv, &a.out)
        }
        Command::Ablate(a) => {
            let inv = training_invocation(&a, "ablate", |data, config, repeats| Invocation::Ablate { data, config, repeats })?;
            commands::execute(inv, &a.out)
        }
        Command::Sweep(a) => {
            let (gammas, ks) = a.grids()?;
            let inv = training_invocation(&a.train, "sweep", |data, config, repeats| Invocation::Sweep {
                data,
                config,
                repeats,
                gammas,
                ks,
            })?;
            commands::execute(inv, &a.train.out)
        }
        Command::Gradcheck(a) => {
            let config = a.model.config()?;
            let data = match a.data.source(config.seed)? {
                Some(d) => d,
                None => DataSource::Synth { spec: commands::gradcheck_default_spec(a.data.data_seed.unwrap_or(config.seed)) },
            };
            commands::execute(Invocation::Gradcheck { data, config }, &a.out)
        }
        Command::Synth(a) => {
            let spec = a.opts.spec(a.synth, a.seed)?;
            let binary = a.format == FormatArg::Binary;
            commands::execute(Invocation::Synth { spec, binary }, &a.out)
        }
        Command::Eval(a) => commands::run_eval(&a),
        Command::Rerun(a) => {
            let m = RunManifest::read(&a.manifest)?;
            let out = a.out.unwrap_or(m.out);
            commands::execute(m.invocation, &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("slrl: {e}");
            e.exit_code()
        }
    }
}
