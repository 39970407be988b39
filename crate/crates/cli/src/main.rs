mod args;
mod commands;
mod config;
mod pipeline;

use std::process::ExitCode;

use clap::{CommandFactory, Parser};

use args::Cli;

/// Failure of a CLI run, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(sar_core::Error),
}

impl From<sar_core::Error> for CliError {
    fn from(e: sar_core::Error) -> Self {
        match e {
            sar_core::Error::Config(m) => CliError::Usage(m),
            e => CliError::Lib(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(e.into())
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(e) if e.is_numerical() => 3,
            CliError::Lib(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) if m.starts_with("error:") => f.write_str(m),
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Lib(e) => write!(f, "error: {e}"),
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("SAR_THREADS") else {
        return Ok(());
    };
    let n: usize = value.trim().parse().map_err(|_| {
        CliError::Usage(format!(
            "SAR_THREADS must be a positive integer, got `{value}`"
        ))
    })?;
    if n == 0 {
        return Err(CliError::Usage("SAR_THREADS must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))
}

fn run() -> Result<(), CliError> {
    let argv = config::expand(std::env::args().collect(), &Cli::command())?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => return Err(CliError::Usage(e.render().to_string())),
        Err(e) => {
            print!("{}", e.render());
            return Ok(());
        }
    };
    configure_threads()?;
    commands::dispatch(cli.command)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_string().trim_end());
            ExitCode::from(e.code())
        }
    }
}
