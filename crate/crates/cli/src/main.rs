use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;
use thermoprop::backflow::write_backflow_csv;
use thermoprop::experiment::{
    backflow_scan, compare_schedulers, oracle_check, read_config, run_experiment, write_compare_csv,
    write_czz_files, write_run_csv, BackflowScanConfig, CompareConfig, ExperimentConfig,
    OracleCheckConfig,
};
use thermoprop::Error;

/// Thermal-state experiments by imaginary-time operator propagation.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate a thermal state and tabulate observables per checkpoint.
    Run(Common),
    /// Truncation error of several schedulers against the dense oracle.
    Compare(Common),
    /// Analytic against empirical backflow probabilities.
    Backflow(Common),
    /// Untruncated propagation against the dense oracles.
    OracleCheck(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_path` in the config; `-` writes to stdout.
    #[arg(long)]
    output: Option<String>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<CheckFailed>().is_some() {
        return 1;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Config { .. } | Error::Parse(_) | Error::Model(_)) => 2,
        Some(Error::Diverged(_) | Error::TermLimit { .. }) => 3,
        _ => 1,
    }
}

/// Exit code 1: the run finished but a check failed.
#[derive(Debug)]
struct CheckFailed;

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("oracle check failed")
    }
}

impl std::error::Error for CheckFailed {}

fn sink(path: Option<&str>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        None | Some("-") => Box::new(io::stdout().lock()),
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {p}"))?),
    })
}

/// Logs the resolved config and stores it beside the results.
fn echo_config<T: serde::Serialize>(config: &T, output: Option<&str>) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(config)?;
    info!("resolved config:\n{json}");
    if let Some(p) = output.filter(|p| *p != "-") {
        let path = format!("{p}.config.json");
        std::fs::write(&path, json + "\n").with_context(|| format!("writing {path}"))?;
    }
    Ok(())
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Run(c) => {
            let mut config: ExperimentConfig = read_config(&c.config)?;
            if let Some(s) = c.seed {
                config.seed = s;
            }
            if let Some(o) = c.output {
                config.output_path = Some(o);
            }
            let resolved = config.resolved()?;
            let out = resolved.output_path.clone();
            echo_config(&resolved, out.as_deref())?;
            let result = run_experiment(&resolved)?;
            write_run_csv(&result.rows, sink(out.as_deref())?)?;
            if let (Some(lattice), false) = (&result.lattice, result.czz.is_empty()) {
                let stem = out
                    .as_deref()
                    .filter(|p| *p != "-")
                    .context("czz_map needs an output_path to write correlation files")?;
                for f in write_czz_files(Path::new(stem), lattice, &result.czz)? {
                    info!("wrote {f}");
                }
            }
        }
        Command::Compare(c) => {
            let mut config: CompareConfig = read_config(&c.config)?;
            if let Some(s) = c.seed {
                config.seed = s;
            }
            if let Some(o) = c.output {
                config.output_path = Some(o);
            }
            let resolved = config.resolved()?;
            echo_config(&resolved, resolved.output_path.as_deref())?;
            let rows = compare_schedulers(&resolved)?;
            write_compare_csv(&rows, sink(resolved.output_path.as_deref())?)?;
        }
        Command::Backflow(c) => {
            let mut config: BackflowScanConfig = read_config(&c.config)?;
            if let Some(s) = c.seed {
                config.seed = s;
            }
            if let Some(o) = c.output {
                config.output_path = Some(o);
            }
            echo_config(&config, config.output_path.as_deref())?;
            let rows = backflow_scan(&config)?;
            write_backflow_csv(&rows, sink(config.output_path.as_deref())?)?;
        }
        Command::OracleCheck(c) => {
            let mut config: OracleCheckConfig = read_config(&c.config)?;
            if let Some(s) = c.seed {
                config.seed = s;
            }
            echo_config(&config, None)?;
            let report = oracle_check(&config)?;
            let mut out = sink(c.output.as_deref())?;
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            if !report.pass {
                return Err(CheckFailed.into());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
