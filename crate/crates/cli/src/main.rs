//! `qfl`: run training, attack demos, cost sweeps and decoy sweeps from a
//! TOML configuration.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qfl_core::experiment::{cmd_attack, cmd_costs, cmd_decoy, cmd_train, ExperimentConfig, ProtocolKind};
use qfl_core::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_ABORT: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "qfl", version, about = "Simulate gradient-hiding federated aggregation protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the configured seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Directory for report.json and the CSV tables. Without it the JSON
    /// report goes to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override the configured protocol.
    #[arg(long, global = true, value_name = "NAME")]
    protocol: Option<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Federated training under the selected protocol.
    Train,
    /// Run the configured attack demonstration.
    Attack,
    /// Communication-cost sweeps with log-log slope fits.
    Costs,
    /// Decoy-state eavesdropper detection sweep.
    Decoy,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(name) = &cli.protocol {
        cfg.protocol = name.parse::<ProtocolKind>()?;
    }
    if let Some(out) = &cli.out {
        cfg.output = Some(out.clone());
    }
    Ok(cfg)
}

fn emit(
    json: serde_json::Result<String>,
    out: Option<&Path>,
    write: impl FnOnce(&Path) -> qfl_core::Result<()>,
) -> qfl_core::Result<()> {
    match out {
        Some(dir) => {
            write(dir)?;
            eprintln!("report written to {}", dir.display());
        }
        None => println!("{}", json?),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    let cfg = load(cli)?;
    let out = cfg.output.as_deref();
    match cli.command {
        Command::Train => {
            let report = cmd_train(&cfg)?;
            emit(serde_json::to_string_pretty(&report), out, |d| report.write_to(d))?;
            eprintln!(
                "{}: {} iterations, final loss {:.6}, accuracy {:.4}, max aggregation error {:.3e}, qubits {}, classical bits {}",
                report.protocol,
                report.iterations,
                report.final_loss,
                report.final_accuracy,
                report.max_aggregation_error,
                report.ledger_totals.qubits,
                report.ledger_totals.classical_bits
            );
            if let Some(reason) = &report.aborted {
                eprintln!("run halted: {reason}");
                return Ok(ExitCode::from(EXIT_ABORT));
            }
        }
        Command::Attack => {
            let summary = cmd_attack(&cfg)?;
            emit(serde_json::to_string_pretty(&summary), out, |d| summary.write_to(d))?;
        }
        Command::Costs => {
            let table = cmd_costs(&cfg)?;
            emit(serde_json::to_string_pretty(&table), out, |d| table.write_to(d))?;
            for s in &table.sweeps {
                let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
                eprintln!(
                    "{:?} over {:?}: {} slope {} (expected {}) {}",
                    s.protocol,
                    s.axis,
                    s.metric,
                    fmt(s.slope),
                    fmt(s.expected_slope),
                    if s.pass { "ok" } else { "MISMATCH" }
                );
            }
        }
        Command::Decoy => {
            let table = cmd_decoy(&cfg)?;
            emit(serde_json::to_string_pretty(&table), out, |d| table.write_to(d))?;
            for r in &table.rows {
                eprintln!(
                    "n_d={:>3}: detected {:.4} predicted {:.4} false positives {}",
                    r.n_d, r.detection_rate, r.predicted, r.false_positives
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(EXIT_CONFIG),
                e if e.is_protocol_abort() => ExitCode::from(EXIT_ABORT),
                _ => ExitCode::from(EXIT_FAILURE),
            }
        }
    }
}
