mod commands;
mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use config::{load_config, Command, ConfigError, JobConfig};
use report::{Report, Runner};

/// Curvature, model and geodesic checks driven by a JSON job file.
#[derive(Debug, Parser)]
#[command(name = "curvhom", version)]
struct Cli {
    /// Job configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Report destination; defaults to the config's `output`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress the summary on stderr.
    #[arg(long)]
    quiet: bool,
}

fn read_report(path: &str) -> Result<Report, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_string(),
        source,
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Schema {
        path: format!("{path}: {}", e.path()),
        message: e.into_inner().to_string(),
    })
}

fn execute(cli: &Cli) -> Result<Report, ConfigError> {
    let mut cfg: JobConfig = load_config(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cfg.command == Command::Report {
        return read_report(cfg.input.as_deref().expect("validated"));
    }
    let echo = serde_json::to_value(&cfg).expect("config serializes");
    let mut runner = Runner::new();
    commands::run(&cfg, &mut runner);
    Ok(runner.finish(&command_name(&echo), cfg.seed, echo))
}

fn command_name(echo: &serde_json::Value) -> String {
    echo["command"].as_str().unwrap_or_default().to_string()
}

/// A `report` job only prints the stored summary unless `--out` is given.
fn is_report_job(path: &Path) -> bool {
    load_config(path).is_ok_and(|c| c.command == Command::Report)
}

fn write_report(report: &Report, dest: Option<&Path>) -> Result<(), ConfigError> {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    match dest {
        Some(path) => std::fs::write(path, text).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let report = match execute(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let resummarized = cli.out.is_none() && is_report_job(&cli.config);
    if !resummarized {
        let configured = report.config.get("output").and_then(|v| v.as_str()).map(PathBuf::from);
        let dest = cli.out.clone().or(configured);
        if let Err(e) = write_report(&report, dest.as_deref()) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    if !cli.quiet {
        eprint!("{}", report.summary());
    }
    if report.failed() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
