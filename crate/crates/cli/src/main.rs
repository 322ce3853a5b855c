//! `sapstop` command-line entry point.
//!
//! Exit codes: 0 success, 1 error, 2 solve reached max iterations without
//! stopping, 3 experiment predicate failed, 64 usage, 74 I/O.

mod args;
mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::{describe, exit_code, output_paths, Outcome, EXIT_IO, EXIT_USAGE};

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

fn write_outputs(cmd: &Command, outcome: &Outcome) -> sapstop::Result<(PathBuf, PathBuf)> {
    let common = cmd.common();
    let (csv, json) = output_paths(common, cmd.name())?;
    std::fs::create_dir_all(&common.out_dir)?;
    for out in &outcome.outputs {
        let path = match out.suffix {
            None => csv.clone(),
            Some(s) => with_suffix(&csv, s),
        };
        std::fs::write(path, &out.csv)?;
    }
    if let Some((path, x)) = &outcome.final_x {
        sapstop::io::write_vector(path, x)?;
    }
    sapstop::io::save_json(&json, &outcome.summary)?;
    Ok((csv, json))
}

fn run(cmd: &Command) -> sapstop::Result<i32> {
    sapstop::harness::configure_jobs(cmd.common().jobs)?;
    // reject bad output names before any computation
    output_paths(cmd.common(), cmd.name())?;
    let outcome = match cmd {
        Command::Solve(a) => commands::solve(a)?,
        Command::Coverage(a) => commands::coverage(a)?,
        Command::Consistency(a) => commands::consistency(a)?,
        Command::Stopping(a) => commands::stopping(a)?,
        Command::Collocation(a) => commands::collocation(a)?,
        Command::SeCheck(a) => commands::se_check(a)?,
    };
    let (csv, json) = write_outputs(cmd, &outcome)?;
    let s = &outcome.summary;
    println!(
        "{}: {} (exit {}); csv {}; json {}",
        s.command,
        if s.passed { "ok" } else { "predicate not met" },
        s.exit_code,
        csv.display(),
        json.display()
    );
    Ok(s.exit_code)
}

fn main() -> ExitCode {
    let argv = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: config file: {e}");
            let code = match e {
                sapstop::Error::Io(_) => EXIT_IO,
                _ => EXIT_USAGE,
            };
            return ExitCode::from(code as u8);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
