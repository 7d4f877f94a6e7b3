//! `homoglab`: runs cell, strip, D-to-N, almost-period, sweep and rate
//! computations from a JSON config and writes reports, tables and a manifest.
//!
//! Exit status is 0 on success, 1 when a checked invariant fails or a
//! computation breaks down, and 2 when the input is rejected.

mod commands;
mod config;
mod output;

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, ValueEnum};
use serde_json::{json, Value};

use config::{Checks, Overrides, RunConfig};
use output::{write_json, ErrorRecord, Manifest, Timings, SCHEMA};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    ConfigParse(String),
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] homoglab_core::Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn name(&self) -> &'static str {
        match self {
            CliError::ConfigParse(_) => "ConfigParse",
            CliError::Validation(_) => "ValidationError",
            CliError::Core(e) => e.name(),
            CliError::Io(_) => "Io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if !e.is_input_rejection() => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Cell,
    Strip,
    Dtn,
    Period,
    Sweep,
    Rates,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Cell => "cell",
            Command::Strip => "strip",
            Command::Dtn => "dtn",
            Command::Period => "period",
            Command::Sweep => "sweep",
            Command::Rates => "rates",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "homoglab",
    version,
    about = "Homogenization on strips with oscillatory Neumann data"
)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated ε list, replacing the config value.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Nodes per coefficient period along the normal.
    #[arg(long)]
    resolution: Option<usize>,
    /// Seed for randomized checks.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    checks: CheckFlags,
}

/// `dtn` check selection; with none given, the config decides.
#[derive(Debug, Args)]
struct CheckFlags {
    #[arg(long)]
    shift: bool,
    #[arg(long)]
    rescale: bool,
    #[arg(long)]
    monotone: bool,
    #[arg(long)]
    barrier: bool,
}

impl CheckFlags {
    fn selection(&self) -> Option<Checks> {
        (self.shift || self.rescale || self.monotone || self.barrier).then_some(Checks {
            shift: self.shift,
            rescale: self.rescale,
            monotone: self.monotone,
            barrier: self.barrier,
        })
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::process::exit(run(Cli::parse()));
}

fn run(cli: Cli) -> i32 {
    if let Err(e) = fs::create_dir_all(&cli.out) {
        eprintln!("Io: cannot create {}: {e}", cli.out.display());
        return 2;
    }
    let overrides = Overrides {
        eps: cli.eps.clone(),
        resolution: cli.resolution,
        seed: cli.seed,
        checks: cli.checks.selection(),
    };

    log::info!("{} with {}", cli.command.name(), cli.config.display());
    let start = Instant::now();
    let loaded = RunConfig::load(&cli.config, &overrides);
    let load_ms = ms(start);

    let run_start = Instant::now();
    let config_echo = loaded
        .as_ref()
        .ok()
        .map(|c| serde_json::to_value(c).expect("config serializes"));
    let result = loaded.and_then(|cfg| commands::run(cli.command, &cfg, &cli.out));
    let run_ms = ms(run_start);

    let write_start = Instant::now();
    let mut artifacts = Vec::new();
    let mut failures = Vec::new();
    let (status, code, error) = match result {
        Ok(outcome) => {
            let mut report = match outcome.payload {
                Value::Object(m) => m,
                other => {
                    let mut m = serde_json::Map::new();
                    m.insert("result".into(), other);
                    m
                }
            };
            report.insert("schema".into(), json!(SCHEMA));
            report.insert("command".into(), json!(cli.command.name()));
            report.insert("failures".into(), json!(outcome.failures));
            artifacts = outcome.artifacts;
            failures = outcome.failures;
            match write_json(&cli.out.join("report.json"), &Value::Object(report)) {
                Ok(()) => {
                    artifacts.insert(0, "report.json".into());
                    if failures.is_empty() {
                        ("ok", 0, None)
                    } else {
                        for f in &failures {
                            eprintln!("assertion failed: {f}");
                        }
                        ("assertion_failure", 1, None)
                    }
                }
                Err(e) => ("input_rejection", e.exit_code(), Some(e)),
            }
        }
        Err(e) => {
            let status = if e.exit_code() == 2 {
                "input_rejection"
            } else {
                "error"
            };
            (status, e.exit_code(), Some(e))
        }
    };
    if let Some(e) = &error {
        eprintln!("{}: {e}", e.name());
    }

    let manifest = Manifest {
        schema: SCHEMA,
        command: cli.command.name().into(),
        status,
        exit_code: code,
        config: config_echo,
        versions: json!({
            "homoglab": env!("CARGO_PKG_VERSION"),
            "homoglab-core": homoglab_core::VERSION,
        }),
        timings: Timings {
            load_ms,
            run_ms,
            write_ms: ms(write_start),
        },
        artifacts,
        failures,
        error: error.map(|e| ErrorRecord {
            name: e.name().into(),
            message: e.to_string(),
        }),
    };
    if let Err(e) = write_json(&cli.out.join("manifest.json"), &manifest) {
        eprintln!("{}: {e}", e.name());
        return 2;
    }
    code
}
