//! `marketpulse` command-line front end.
//!
//! Reports go to stdout as JSON; `--out DIR` adds CSV plot data. Exit codes:
//! 0 success, 1 invalid input or usage, 2 I/O failure.

mod args;
mod data;
mod fraud;
mod metrics;
mod output;
mod ranked;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use marketpulse_core::snapstore::StoreError;

use args::{Cli, Command};

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(a) => data::simulate(a),
        Command::Ingest(a) => data::ingest(a),
        Command::Crawl(a) => data::crawl_market(a),
        Command::MockMarket(a) => data::mock_market(a),
        Command::Timeline(a) => data::timeline(a),
        Command::Metrics(c) => metrics::run(c),
        Command::Topk(c) => ranked::run(c),
        Command::Anomaly(c) => fraud::run(c),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|cause| {
        cause.is::<std::io::Error>()
            || matches!(
                cause.downcast_ref::<StoreError>(),
                Some(StoreError::Io { .. } | StoreError::Corrupt { .. } | StoreError::Locked(_))
            )
    });
    if io {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
