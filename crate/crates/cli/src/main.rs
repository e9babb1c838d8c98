mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;
use trxos::tensor::TensorError;

use crate::args::{Cli, Command};
use crate::config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] trxos::Error),
}

impl CliError {
    /// 2 usage/config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> u8 {
        use trxos::Error as E;
        match self {
            CliError::Usage(_) | CliError::Core(E::Config(_)) => 2,
            CliError::Core(E::Numeric(_)) | CliError::Core(E::Tensor(TensorError::NonFinite(_))) => 4,
            CliError::Core(_) => 3,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.sequential {
        trxos::exec::set_execution(trxos::exec::Execution::Sequential);
    }
    let run = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::GenData(a) => commands::gen_data(run, a),
        Command::Train(a) => commands::train(run, a),
        Command::Eval(a) => commands::eval(run, a),
        Command::Confusion(a) => commands::confusion(run, a),
        Command::Infer(a) => commands::infer(run, a),
        Command::Validate(a) => commands::validate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
