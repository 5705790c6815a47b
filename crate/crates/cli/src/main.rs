//! `fedgoal` command-line driver.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedgoal::data::{synthesize_series, write_series, SynthConfig};
use fedgoal::harness::{emit_outputs, CellOutcome, Experiment, ExperimentConfig, HarnessError};
use fedgoal::metrics::MetricRow;
use log::info;

#[derive(Parser)]
#[command(
    name = "fedgoal",
    version,
    about = "Federated forecasting experiments with goal-programming aggregation"
)]
struct Cli {
    /// More log output (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the baseline and every grid cell, then write the report files.
    Run {
        /// Experiment config (.toml or .json).
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train only the single-model baseline and print its test metrics.
    Baseline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a synthetic hourly series as `timestamp,value` CSV.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthConfig::default().length)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = SynthConfig::default().noise_std)]
        noise_std: f64,
        #[arg(long, default_value_t = 0.0)]
        trend_slope: f64,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("FEDGOAL_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().map_err(|_| {
        Failure::Config(format!(
            "FEDGOAL_THREADS must be a non-negative integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn metric_line(label: &str, m: &MetricRow) -> String {
    format!(
        "{label:<16} {:>12.4} {:>12.4} {:>10.4} {:>8.4}",
        m.rmse, m.mae, m.mase, m.smape
    )
}

fn header() -> String {
    format!(
        "{:<16} {:>12} {:>12} {:>10} {:>8}",
        "model", "rmse", "mae", "mase", "smape"
    )
}

fn run(config: PathBuf, out: Option<PathBuf>) -> Result<(), Failure> {
    let config = ExperimentConfig::from_path(&config)?;
    let dir = out.unwrap_or_else(|| config.output_dir.clone());
    let report = Experiment::new(config)?.run()?;
    println!("{}", header());
    for outcome in &report.cells {
        match outcome {
            CellOutcome::Ok(r) => println!("{}", metric_line(&r.cell.tag(), &r.metrics)),
            CellOutcome::Failed { cell, error } => println!("{:<16} failed: {error}", cell.tag()),
        }
    }
    println!("{}", metric_line("baseline", &report.baseline.metrics));
    let files = emit_outputs(&report, &dir)?;
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}

fn baseline(config: PathBuf) -> Result<(), Failure> {
    let config = ExperimentConfig::from_path(&config)?;
    let result = Experiment::new(config)?.run_baseline()?;
    info!(
        "training mse {} -> {}",
        result.training.initial_mse, result.training.final_mse
    );
    println!("{}", header());
    println!("{}", metric_line("baseline", &result.metrics));
    println!("{}", metric_line("last-value", &result.naive));
    Ok(())
}

fn synth(out: PathBuf, synth: SynthConfig) -> Result<(), Failure> {
    synth
        .validate()
        .map_err(|e| Failure::Config(e.to_string()))?;
    let series = synthesize_series(&synth).map_err(|e| Failure::Runtime(e.to_string()))?;
    let file =
        File::create(&out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    write_series(&series, BufWriter::new(file)).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("wrote {} points to {}", series.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = configure_threads().and_then(|()| match cli.command {
        Command::Run { config, out } => run(config, out),
        Command::Baseline { config } => baseline(config),
        Command::Synth {
            out,
            length,
            seed,
            noise_std,
            trend_slope,
        } => synth(
            out,
            SynthConfig {
                length,
                seed,
                noise_std,
                trend_slope,
                ..SynthConfig::default()
            },
        ),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
