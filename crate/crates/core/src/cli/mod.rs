//! The `probit-oaxaca` command line.
//!
//! Every command reads one JSON configuration document ([`RunConfig`]).
//! Failures print a one-line JSON error record on stderr naming the module
//! that failed, and exit with status 1; usage errors exit with status 2.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod validate;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand};

pub use config::{CsvInput, InputMode, Overrides, RunConfig};

use crate::marginal::Marginalization;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "probit-oaxaca",
    version,
    about = "Hierarchical probit fits and Oaxaca decomposition of the change in early-life mortality between two surveys",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
struct Common {
    /// JSON configuration document.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the document.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the document.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Decomposition order as a comma-separated list of column groups.
    #[arg(long)]
    order: Option<String>,
    /// appendix_divide (default) or maintext_multiply.
    #[arg(long)]
    marginalization: Option<Marginalization>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate or ingest, fit both surveys, decompose and write every table.
    Run(Common),
    /// Write the two simulated surveys as CSV.
    Simulate(Common),
    /// Fit both surveys and write the draw files.
    Fit(Common),
    /// Decompose previously written draws.
    Decompose {
        #[command(flatten)]
        common: Common,
        /// Directory holding draws_s1/draws_s2 (defaults to the output directory).
        #[arg(long)]
        draws: Option<PathBuf>,
    },
    /// Print the tables of a finished decomposition.
    Report(Common),
    /// Run the oracle suite and print one line per check.
    Validate(Common),
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            order: self.order.as_deref().map(config::parse_order),
            marginalization: self.marginalization,
        }
    }

    /// The document with command-line overrides applied. `required` commands
    /// fail with a usage error when no document is given.
    fn load(&self, required: bool) -> std::result::Result<RunConfig, Outcome> {
        let mut config = match &self.config {
            Some(path) => match RunConfig::load(path) {
                Ok(c) => c,
                // An empty document carries no instructions at all.
                Err(Error::Config(m)) if m.contains("is empty") => return Err(Outcome::Usage(m)),
                Err(e) => return Err(Outcome::Failed(e)),
            },
            None if required => return Err(Outcome::Usage("--config is required".into())),
            None => RunConfig::default(),
        };
        config.apply(&self.overrides());
        Ok(config)
    }
}

enum Outcome {
    Usage(String),
    Failed(Error),
}

/// One-line JSON error record.
pub fn error_record(e: &Error) -> String {
    serde_json::json!({
        "status": "error",
        "module": e.module(),
        "message": e.to_string(),
    })
    .to_string()
}

fn dispatch(command: Command) -> std::result::Result<i32, Outcome> {
    let fail = Outcome::Failed;
    match command {
        Command::Run(c) => {
            let path = pipeline::run(&c.load(true)?).map_err(fail)?;
            println!("wrote {}", path.display());
        }
        Command::Simulate(c) => {
            let path = pipeline::simulate(&c.load(true)?).map_err(fail)?;
            println!("wrote {}", path.display());
        }
        Command::Fit(c) => {
            let path = pipeline::fit(&c.load(true)?).map_err(fail)?;
            println!("wrote {}", path.display());
        }
        Command::Decompose { common, draws } => {
            let config = common.load(true)?;
            let dir = draws.unwrap_or_else(|| config.output_dir.clone());
            let path = pipeline::decompose(&config, &dir).map_err(fail)?;
            println!("wrote {}", path.display());
        }
        Command::Report(c) => {
            let config = c.load(false)?;
            print!("{}", pipeline::report(&config.output_dir).map_err(fail)?);
        }
        Command::Validate(c) => {
            let config = c.load(false)?;
            let settings = validate::ValidateSettings {
                marginalization: config.marginalization,
                seed: config.seed,
                ..Default::default()
            };
            let checks = validate::oracle_suite(&settings);
            print!("{}", validate::render(&checks));
            return Ok(if checks.iter().all(|c| c.passed) {
                0
            } else {
                1
            });
        }
    }
    Ok(0)
}

/// Parse arguments, run the command and return the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(Outcome::Usage(m)) => {
            eprintln!("error: {m}\n");
            eprintln!("{}", Cli::command().render_help());
            2
        }
        Err(Outcome::Failed(e)) => {
            eprintln!("{}", error_record(&e));
            1
        }
    }
}

/// Convenience for library users: run with an already-built document.
pub fn run(config: &RunConfig) -> Result<PathBuf> {
    pipeline::run(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_arguments_is_a_usage_error() {
        assert_eq!(main_with_args(["probit-oaxaca"]), 2);
        assert_eq!(main_with_args(["probit-oaxaca", "run"]), 2);
    }

    #[test]
    fn empty_config_is_a_usage_error() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let p = f.path().to_str().unwrap();
        assert_eq!(
            main_with_args(["probit-oaxaca", "validate", "--config", p]),
            2
        );
        assert_eq!(main_with_args(["probit-oaxaca", "run", "--config", p]), 2);
    }

    #[test]
    fn invalid_config_exits_with_error_record() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"survey_years": [2000, 2010]}"#).unwrap();
        assert_eq!(
            main_with_args(["probit-oaxaca", "run", "--config", p.to_str().unwrap()]),
            1
        );
        let e = Error::Config("x".into());
        let v: serde_json::Value = serde_json::from_str(&error_record(&e)).unwrap();
        assert_eq!(v["module"], "cli");
        assert_eq!(v["status"], "error");
    }

    #[test]
    fn bad_marginalization_flag_is_rejected() {
        assert_eq!(
            main_with_args(["probit-oaxaca", "validate", "--marginalization", "sideways"]),
            2
        );
    }
}
