mod args;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;
use output::Failure;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.exit_code())
        }
    }
}

fn run() -> Result<(), Failure> {
    let argv: Vec<String> = std::env::args().collect();
    let argv = config::merge(argv)?;
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Failure::usage(&e)),
    };
    configure_threads()?;
    commands::dispatch(cli)
}

/// Caps the rayon pool at MESO_THREADS workers when set.
fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("MESO_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::new("E_ARGUMENT", format!("MESO_THREADS must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::new("E_FAILED", format!("thread pool: {e}")))?;
    log::debug!("using {n} worker threads");
    Ok(())
}
