/// `println!` that ignores a closed stdout, e.g. when piped into `head`.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

mod args;
mod commands;
mod error;
mod report;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::CliError;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads(cli.command.common().threads)?;
    match cli.command {
        Command::Classify(a) => commands::classify(&a),
        Command::Yaglom(a) => commands::yaglom(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Recovery(a) => commands::recovery(&a),
        Command::Sizebias(a) => commands::sizebias(&a),
        Command::IdentityCheck(a) => commands::identity_check(&a),
        Command::D4Explore(a) => commands::d4_explore(&a),
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    if threads.is_some_and(|n| n > 1) {
        eprintln!("note: built without the parallel feature; running on one thread");
    }
    Ok(())
}
