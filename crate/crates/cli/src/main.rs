#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::{CommandFactory, Parser};

use args::{Cli, Command, SurrogateCommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] prodrep::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// A required setting is absent from both the flags and the config file.
    fn missing(command: &str, key: &str) -> Self {
        let mut cmd = Cli::command();
        cmd.build();
        let mut sub = &mut cmd;
        for name in command.split(' ') {
            sub = sub.find_subcommand_mut(name).expect("known subcommand");
        }
        let help = sub.render_help();
        CliError::Usage(format!(
            "missing required setting `{key}` (flag --{} or config key {key})\n\n{help}",
            key.replace('_', "-")
        ))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numeric() => 2,
            _ => 1,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = cli.common.config.clone();
    let file = file.as_deref();
    match &cli.command {
        Command::Fit(a) => commands::fit(&config::resolve(file, &cli.common, a)?),
        Command::Simulate(a) => commands::simulate(&config::resolve(file, &cli.common, a)?),
        Command::Feasibility(a) => commands::feasibility(&config::resolve(file, &cli.common, a)?),
        Command::CostSurface(a) => commands::cost_surface_cmd(&config::resolve(file, &cli.common, a)?),
        Command::Surrogate { action } => match action {
            SurrogateCommand::Train(a) => commands::surrogate_train(&config::resolve(file, &cli.common, a)?),
            SurrogateCommand::Eval(a) => commands::surrogate_eval(&config::resolve(file, &cli.common, a)?),
            SurrogateCommand::Info(a) => commands::surrogate_info(&config::resolve(file, &cli.common, a)?),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
