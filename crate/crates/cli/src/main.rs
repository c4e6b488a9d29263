//! `gravhom` command-line tool.
//!
//! Every run writes its tables plus `manifest.json` and `schema.json` into
//! `--output`. Failures print one line `error[<category>]: <message>` on
//! stderr and exit nonzero (2 for usage errors, 1 otherwise).

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};

#[derive(Debug)]
pub struct CliError {
    pub category: String,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { category: "usage".into(), message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { category: "io_error".into(), message: message.into() }
    }

    fn exit_code(&self) -> u8 {
        if self.category == "usage" {
            2
        } else {
            1
        }
    }
}

impl From<gravhom::Error> for CliError {
    fn from(e: gravhom::Error) -> Self {
        let category = match &e {
            gravhom::Error::InvalidArgument(_) => "usage",
            other => other.category(),
        };
        Self { category: category.into(), message: e.to_string() }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Stability(a) => commands::stability(a),
        Command::Noise(a) => commands::noise(a),
        Command::Drift(a) => commands::drift(a),
        Command::Timing(a) => commands::timing(a),
        Command::Ransac(a) => commands::ransac(a),
        Command::Solve(a) => commands::solve(a),
        Command::Generate(a) => commands::generate_scene(a),
        Command::Schema => {
            println!("{:#}", gravhom::io::schema_manifest());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            // First line of clap's report, without its own "error:" prefix.
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or_default();
            let msg = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("error[usage]: {}", one_line(msg));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category, one_line(&e.message));
            ExitCode::from(e.exit_code())
        }
    }
}
