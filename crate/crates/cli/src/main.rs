mod args;
mod commands;
mod config;
mod failure;
mod output;
mod svg;

use std::path::Path;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use failure::{Failure, RunResult};
use output::{Manifest, OutDir};

#[derive(serde::Serialize)]
struct Diagnostic<'a> {
    status: &'a str,
    exit_code: u8,
    message: String,
}

fn run(cli: Cli) -> (RunResult, std::path::PathBuf) {
    let (resolved, out) = match cli.command {
        Command::Quantogram(a) => (a.resolve(), a.out.out),
        Command::Perp(a) => (a.resolve(), a.out.out),
        Command::Gridfit(a) => (a.resolve(), a.out.out),
        Command::Clean(a) => (a.resolve(), a.out.out),
        Command::Synth(a) => (a.resolve(), a.out.out),
        Command::Rerun(a) => {
            let replay = Manifest::load(&a.manifest).and_then(|m| {
                m.check_inputs()?;
                Ok(m.config)
            });
            (replay, a.out.out)
        }
    };
    let result = resolved.and_then(|config| commands::execute(config, &out));
    (result, out)
}

fn write_diagnostic(out: &Path, failure: &Failure) {
    let Ok(dir) = OutDir::create(out) else { return };
    let status = match failure {
        Failure::Input(_) => "input-error",
        Failure::Config(_) => "config-error",
        Failure::Degenerate(_) => "degenerate",
    };
    let diag = Diagnostic { status, exit_code: failure.exit_code(), message: failure.to_string() };
    if let Err(e) = dir.json("diagnostic.json", &diag) {
        eprintln!("could not write diagnostic: {e}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, out) = run(cli);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            if matches!(failure, Failure::Degenerate(_)) {
                write_diagnostic(&out, &failure);
            }
            ExitCode::from(failure.exit_code())
        }
    }
}
