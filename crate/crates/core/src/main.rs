use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use ddosim::sim::config::{self, SimConfig};
use ddosim::sim::{run, ExecMode, RunOutput};
use ddosim::wire::MsgKind;

#[derive(Parser)]
#[command(name = "ddosim", version, about = "Deterministic DDoS detection and mitigation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a configuration file and write the metrics series as CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configured duration, in ticks.
        #[arg(long)]
        duration: Option<u64>,
        /// Overrides the configured bus loss rate (0..=1).
        #[arg(long)]
        loss: Option<f64>,
        /// Runs the per-VM stage across threads; output is identical either way.
        #[arg(long)]
        parallel: bool,
    },
    /// Run a built-in demo: `one` detects the attack within the mining
    /// deadline, `two` rides the stepped policing release instead.
    Demo {
        #[arg(long, value_parser = ["one", "two"])]
        scenario: String,
        /// Output CSV path (default: scenario_<name>.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a configuration file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

enum CliError {
    Config(String),
    Io(String),
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn read_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(config::parse(&text)?)
}

fn write_output(path: &Path, out: &RunOutput) -> Result<(), CliError> {
    fs::write(path, out.to_csv()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let alerts: Vec<u64> = [MsgKind::Alert1, MsgKind::Alert2, MsgKind::Alert3]
        .iter()
        .map(|k| out.sent_by_kind.get(k.name()).copied().unwrap_or(0))
        .collect();
    println!("wrote {} ({} rows)", path.display(), out.rows.len());
    println!(
        "bus: {} sent, {} delivered, {} dropped; auth failures {}, decode failures {}",
        out.bus_sent, out.bus_delivered, out.bus_dropped, out.auth_failures, out.decode_failures
    );
    println!(
        "alerts: level1 {}, level2 {}, level3 {}; rules {}, restores {}, policing cancelled {}, expired jobs {}",
        alerts[0],
        alerts[1],
        alerts[2],
        out.cms.rules_sent,
        out.cms.restores_sent,
        out.cms.policing_cancelled,
        out.cms.jobs_expired
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out, seed, duration, loss, parallel } => {
            let mut cfg = read_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(duration) = duration {
                cfg.duration = duration;
            }
            if let Some(loss) = loss {
                cfg.loss = loss;
            }
            let mode = if parallel { ExecMode::Parallel } else { ExecMode::Sequential };
            let output = run(&cfg, mode)?;
            write_output(&out, &output)
        }
        Command::Demo { scenario, out } => {
            let cfg = match scenario.as_str() {
                "one" => config::scenario_one(),
                _ => config::scenario_two(),
            };
            let path = out.unwrap_or_else(|| PathBuf::from(format!("scenario_{scenario}.csv")));
            let output = run(&cfg, ExecMode::Sequential)?;
            write_output(&path, &output)
        }
        Command::Validate { config } => {
            let cfg = read_config(&config)?;
            cfg.validate().map_err(CliError::from)?;
            println!(
                "ok: {} vms, {} ticks, {} users per vm, {} attacks",
                cfg.vms,
                cfg.duration,
                cfg.users_per_vm,
                cfg.attacks.len()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("io error: {msg}");
            ExitCode::from(2)
        }
    }
}
