//! Library side of the `rpreg` command-line tool, so the commands can be
//! driven from tests without spawning a process.

pub mod args;
pub mod commands;
pub mod config;
pub mod data;
pub mod hypothesis;
pub mod report;

use std::io::Write;

use anyhow::Result;

pub use args::Cli;
pub use commands::execute;
pub use report::{Report, RunManifest};

/// Exit status when every fit converged and nothing failed.
pub const EXIT_OK: i32 = 0;
/// Exit status for errors, including per-α failures the command skipped.
pub const EXIT_ERROR: i32 = 1;
/// Exit status when output was produced but some fit did not converge.
pub const EXIT_NONCONVERGED: i32 = 3;

pub fn exit_code(report: &Report) -> i32 {
    if !report.errors.is_empty() {
        EXIT_ERROR
    } else if report.nonconverged > 0 {
        EXIT_NONCONVERGED
    } else {
        EXIT_OK
    }
}

pub fn manifest(cli: &Cli, report: &Report) -> Result<RunManifest> {
    Ok(RunManifest::new(report, serde_json::to_value(cli)?, cli.global.seed))
}

/// Runs the command and writes its outputs; returns the exit status.
pub fn run(cli: &Cli, stdout: &mut impl Write, stderr: &mut impl Write) -> Result<i32> {
    let report = execute(cli)?;
    let m = manifest(cli, &report)?;
    match &cli.global.output {
        Some(dir) => {
            for path in report::write_dir(&report, dir, cli.global.format, m)? {
                writeln!(stderr, "wrote {}", path.display())?;
            }
        }
        None => report::write_stdout(&report, cli.global.format, m, stdout)?,
    }
    for w in &report.warnings {
        writeln!(stderr, "warning: {w}")?;
    }
    for e in &report.errors {
        writeln!(stderr, "error: {e}")?;
    }
    Ok(exit_code(&report))
}
