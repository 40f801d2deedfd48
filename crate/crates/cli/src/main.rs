//! `tagvocab`: batch analysis of tagging streams into plot-ready TSV files.
//!
//! Exit codes: 0 success, 1 usage error, 2 input or parse failure, 3 analysis
//! precondition failure (for example an empty stream).

mod analysis;
mod args;
mod battery;
mod commands;
mod error;
mod input;
mod run_report;
mod synth_cmd;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, Result};
use run_report::RunReport;

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest(_) => "ingest",
        Command::Summary(_) => "summary",
        Command::Growth(_) => "growth",
        Command::LocalGrowth(_) => "local-growth",
        Command::Users(_) => "users",
        Command::Postlen(_) => "postlen",
        Command::Exponents(_) => "exponents",
        Command::Collapse(_) => "collapse",
        Command::Synth(_) => "synth",
        Command::Report(_) => "report",
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let name = command_name(&cli.command);
    let mut report = RunReport::new(name, g.seed.unwrap_or(0), g.quiet);
    // the checksum costs a hash over the input; only pay for it when reported
    let hash = g.json_report.is_some();
    let out = report.timed(name, |r| match &cli.command {
        Command::Ingest(a) => commands::ingest(a, r, hash),
        Command::Summary(a) => commands::summary(a, r, hash),
        Command::Growth(a) => commands::growth(a, r, hash),
        Command::LocalGrowth(a) => commands::local_growth(a, r, hash),
        Command::Users(a) => commands::users(a, r, hash),
        Command::Postlen(a) => commands::postlen(a, r, hash),
        Command::Exponents(a) => commands::exponents(a, r),
        Command::Collapse(a) => commands::collapse(a, r),
        Command::Synth(a) => synth_cmd::synth(a, g.seed, r),
        Command::Report(a) => battery::report(a, r),
    });
    out?;
    if let Some(path) = &g.json_report {
        std::fs::write(path, report.to_json_with_timings())
            .map_err(|e| CliError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_broken_pipe() => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
