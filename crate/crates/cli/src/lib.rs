//! Command-line front end for the attnscale sequence operators.

pub mod args;
mod commands;
mod error;
pub mod verify;

use std::io::Write;

pub use args::Cli;
pub use commands::{bench_config, demo_config};
pub use error::{CliError, CliResult};

use args::{Command, VerifyArgs};
use verify::{run_verify, Status, VerifyOptions};

/// Runs a parsed invocation, writing results to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult {
    match &cli.command {
        Command::Bench(a) => commands::bench(a, out),
        Command::Verify(a) => run_verify_command(a, out),
        Command::Demo(a) => commands::demo(a, out),
        Command::Report(a) => commands::report(a, out),
    }
}

fn run_verify_command(args: &VerifyArgs, out: &mut dyn Write) -> CliResult {
    let options = VerifyOptions {
        mechanism: args.mechanism,
        with_timing: args.with_timing,
        seed: args.seed,
        fault: args.inject_fault,
    };
    let mut io_error = None;
    let reports = run_verify(&options, |r| {
        if let Err(e) = writeln!(out, "{r}").and_then(|_| out.flush()) {
            io_error.get_or_insert(e);
        }
    });
    if let Some(e) = io_error {
        return Err(error::runtime(e));
    }
    let count = |s| reports.iter().filter(|r| r.status == s).count();
    let (passed, failed, skipped) = (count(Status::Pass), count(Status::Fail), count(Status::Skip));
    writeln!(
        out,
        "\n{} properties: {passed} passed, {failed} failed, {skipped} skipped",
        reports.len()
    )
    .map_err(error::runtime)?;
    if failed > 0 {
        Err(CliError::VerifyFailed)
    } else {
        Ok(())
    }
}
