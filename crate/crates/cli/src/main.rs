//! Command-line front end for the two-asset market engine.
//!
//! Exit codes: 0 success, 2 validation failure (with a JSON error record on
//! stderr), 3 runtime market degeneracy.

mod config;
mod run;
mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Model, RawConfig, Violation};

const EXIT_VALIDATION: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "bubblelab",
    about = "Average/equilibrium price dynamics for experimental asset markets",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file.
    config: PathBuf,
    /// Output path, overriding [output] path in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo session-count override.
    #[arg(long)]
    sessions: Option<u32>,
    /// Config overrides of the form section.key=value (repeatable).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment (single cell or sweep, depending on the config).
    Run(RunArgs),
    /// Check a config against every invariant without running it.
    Validate {
        /// Experiment config file.
        config: PathBuf,
    },
    /// Run a parameter sweep; the config must declare sweep axes.
    Sweep(RunArgs),
    /// Run the Monte Carlo oracle; the config model must be monte_carlo.
    Simulate(RunArgs),
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Validate { config } => validate_command(&config),
        Command::Run(args) => run_command(args, RunKind::Any),
        Command::Sweep(args) => run_command(args, RunKind::Sweep),
        Command::Simulate(args) => run_command(args, RunKind::Simulate),
    }
}

#[derive(PartialEq)]
enum RunKind {
    Any,
    Sweep,
    Simulate,
}

fn load_raw(path: &Path, overrides: &[String]) -> Result<RawConfig, ExitCode> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            report_violations(
                path,
                &[Violation {
                    key: "config".into(),
                    message: format!("cannot read {}: {e}", path.display()),
                }],
            );
            return Err(ExitCode::from(EXIT_VALIDATION));
        }
    };
    let mut raw = match RawConfig::parse(&text) {
        Ok(r) => r,
        Err(e) => {
            report_violations(
                path,
                &[Violation {
                    key: format!("parse:{}:{}", e.line, e.column),
                    message: e.message,
                }],
            );
            return Err(ExitCode::from(EXIT_VALIDATION));
        }
    };
    for spec in overrides {
        if let Err(message) = raw.apply_override(spec) {
            report_violations(
                path,
                &[Violation {
                    key: "override".into(),
                    message,
                }],
            );
            return Err(ExitCode::from(EXIT_VALIDATION));
        }
    }
    Ok(raw)
}

fn validate_command(path: &Path) -> ExitCode {
    let raw = match load_raw(path, &[]) {
        Ok(r) => r,
        Err(code) => return code,
    };
    match config::load(&raw) {
        Ok(exp) => {
            let cells = cell_count(&exp);
            println!(
                "ok: {} is a runnable {} experiment ({} sweep cell{})",
                path.display(),
                exp.model.name(),
                cells,
                if cells == 1 { "" } else { "s" }
            );
            ExitCode::SUCCESS
        }
        Err(violations) => {
            for v in &violations {
                println!("violation: {v}");
            }
            report_violations(path, &violations);
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

fn cell_count(exp: &config::Experiment) -> usize {
    exp.sweep.iter().map(|(_, v)| v.len()).product()
}

fn run_command(args: RunArgs, kind: RunKind) -> ExitCode {
    let raw = match load_raw(&args.config, &args.set) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let exp = match config::load(&raw) {
        Ok(e) => e,
        Err(violations) => {
            report_violations(&args.config, &violations);
            return ExitCode::from(EXIT_VALIDATION);
        }
    };

    let kind_violation = match kind {
        RunKind::Sweep if exp.sweep.is_empty() => Some(Violation {
            key: "sweep".into(),
            message: "the sweep subcommand requires at least one sweep axis".into(),
        }),
        RunKind::Simulate if exp.model != Model::MonteCarlo => Some(Violation {
            key: "market.model".into(),
            message: format!(
                "the simulate subcommand requires model = monte_carlo, got {}",
                exp.model.name()
            ),
        }),
        _ => None,
    };
    if let Some(v) = kind_violation {
        report_violations(&args.config, &[v]);
        return ExitCode::from(EXIT_VALIDATION);
    }

    match run::execute(&exp, args.out.as_deref(), args.seed, args.sessions) {
        Ok(files) => {
            for f in files {
                println!("wrote {} ({} bytes)", f.path.display(), f.bytes);
            }
            ExitCode::SUCCESS
        }
        Err(run::RunError::Degenerate(e)) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": "degenerate", "message": e.to_string() })
            );
            ExitCode::from(EXIT_DEGENERATE)
        }
        Err(run::RunError::Invalid(e)) => {
            report_violations(
                &args.config,
                &[Violation {
                    key: "runtime".into(),
                    message: e.to_string(),
                }],
            );
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(run::RunError::Io(e)) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": "io", "message": e.to_string() })
            );
            ExitCode::FAILURE
        }
    }
}

/// Machine-readable error record on stderr.
fn report_violations(config: &Path, violations: &[Violation]) {
    let record = serde_json::json!({
        "error": "validation",
        "config": config.display().to_string(),
        "violations": violations
            .iter()
            .map(|v| serde_json::json!({ "key": v.key, "message": v.message }))
            .collect::<Vec<_>>(),
    });
    eprintln!("{record}");
}
