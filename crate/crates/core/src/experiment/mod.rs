//! End-to-end experiments: federated training under each protocol, attack
//! demonstrations, communication-cost sweeps and decoy detection sweeps.
//!
//! Every command is deterministic in its configuration and seed. Reports are
//! written as `report.json` plus CSV tables into an output directory.

mod attack;
mod config;
mod costs;
mod decoy;
mod train;

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use attack::{cmd_attack, AttackOutcome, AttackSummary, CensusRow, InversionStats};
pub use config::{
    default_sweeps, AttackDemo, AttackSection, BqbcSection, CostProtocol, CostSweep, CostsSection, CssSection,
    DecoySection, ExperimentConfig, GhzSection, ProtocolKind, SmsSection, SweepAxis, TaskSection, TrainingSection,
};
pub use costs::{cmd_costs, log_log_slope, run_sweep, CostRow, CostTable, SweepResult};
pub use decoy::{cmd_decoy, predicted_detection, DecoyRow, DecoyTable};
pub use train::{cmd_train, initial_params, IterationRecord, RunReport, STATISTICAL_EXCEEDANCE_RATE};

use crate::channel::Ledger;
use crate::error::Result;
use crate::flmodel::ModelParams;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LedgerTotals {
    pub qubits: u64,
    pub classical_bits: u64,
}

impl LedgerTotals {
    pub fn of(ledger: &Ledger) -> Self {
        Self {
            qubits: ledger.total_qubits(),
            classical_bits: ledger.total_classical_bits(),
        }
    }
}

/// SHA-256 over the little-endian bytes of the flattened parameters.
pub fn params_digest(params: &ModelParams) -> String {
    let mut hasher = Sha256::new();
    for v in params.flat() {
        hasher.update(v.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

fn write_json<T: Serialize>(dir: &Path, value: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join("report.json"), text)?;
    Ok(())
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CurveRow {
    iteration: usize,
    loss: f64,
    accuracy: f64,
    max_aggregation_error: Option<f64>,
    error_budget: Option<f64>,
    exceedances: Option<usize>,
}

#[derive(Serialize)]
struct FlatCostRow {
    protocol: CostProtocol,
    axis: SweepAxis,
    value: u64,
    qubits: u64,
    classical_bits: u64,
    oracle_calls: u64,
    metric: u64,
}

impl RunReport {
    /// `report.json`, `curve.csv` and `ledger.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        write_json(dir, self)?;
        write_rows(
            &dir.join("curve.csv"),
            self.curve.iter().map(|r| CurveRow {
                iteration: r.iteration,
                loss: r.loss,
                accuracy: r.accuracy,
                max_aggregation_error: r.max_aggregation_error,
                error_budget: r.error_budget,
                exceedances: r.exceedances,
            }),
        )?;
        self.ledger.write_csv(fs::File::create(dir.join("ledger.csv"))?)
    }
}

impl AttackSummary {
    /// `report.json`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        write_json(dir, self)
    }
}

impl CostTable {
    /// `report.json` and `costs.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        write_json(dir, self)?;
        write_rows(
            &dir.join("costs.csv"),
            self.sweeps.iter().flat_map(|s| {
                s.rows.iter().map(move |r| FlatCostRow {
                    protocol: s.protocol,
                    axis: s.axis,
                    value: r.value,
                    qubits: r.qubits,
                    classical_bits: r.classical_bits,
                    oracle_calls: r.oracle_calls,
                    metric: r.metric,
                })
            }),
        )
    }
}

impl DecoyTable {
    /// `report.json` and `decoy.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        write_json(dir, self)?;
        write_rows(&dir.join("decoy.csv"), self.rows.iter())
    }
}
