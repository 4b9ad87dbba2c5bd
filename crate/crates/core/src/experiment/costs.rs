//! Communication-cost sweeps: run each protocol over a grid, read the ledger
//! totals and fit log-log slopes.

use rand::Rng;
use serde::Serialize;

use super::config::{default_sweeps, CostProtocol, CostSweep, CostsSection, ExperimentConfig, SweepAxis};
use super::train::stream;
use crate::bqbc::{run_bqbc_estimate, BqbcConfig, CountingMode};
use crate::channel::Channel;
use crate::css::{run_classical, run_quantum, CssConfig, Weights};
use crate::error::{Error, Result};
use crate::incremental::{ghz_estimate_sum, sms_run, Distributor, GhzConfig, SmsAdversary, SmsConfig};
use crate::SimRng;

const COST_STREAM: u64 = 0x20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CostRow {
    pub value: u64,
    pub qubits: u64,
    pub classical_bits: u64,
    pub oracle_calls: u64,
    /// The quantity the slope is fitted to.
    pub metric: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub protocol: CostProtocol,
    pub axis: SweepAxis,
    pub metric: &'static str,
    pub rows: Vec<CostRow>,
    /// Least-squares slope of `ln metric` against `ln value`.
    pub slope: Option<f64>,
    pub expected_slope: Option<f64>,
    pub tolerance: Option<f64>,
    /// For the counting-qubit axis: every run used exactly `2^t - 1` oracle
    /// calls per parameter.
    pub exact_law: Option<bool>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostTable {
    pub seed: u64,
    pub config_digest: String,
    pub sweeps: Vec<SweepResult>,
}

/// Ordinary least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|(x, y)| *x <= 0.0 || *y <= 0.0) {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn random_matrix(m: usize, d: usize, rng: &mut SimRng) -> Vec<Vec<f64>> {
    (0..m).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn measure(protocol: CostProtocol, axis: SweepAxis, value: u64, base: &CostsSection, rng: &mut SimRng) -> Result<CostRow> {
    let mut m = base.clients;
    let mut d = base.parameters;
    let mut shots = base.shots;
    let mut t = base.counting_qubits;
    let v = value as usize;
    match axis {
        SweepAxis::Clients => m = v,
        SweepAxis::Parameters => d = v,
        SweepAxis::Shots => shots = value,
        SweepAxis::CountingQubits => t = v,
    }
    if m == 0 || d == 0 || shots == 0 {
        return Err(Error::Config("sweep values must be positive".into()));
    }
    let mut channel = Channel::new();
    let mut oracle_calls = 0;
    match protocol {
        CostProtocol::CssClassical | CostProtocol::CssQuantum => {
            let cfg = CssConfig {
                m,
                d,
                ..CssConfig::default()
            };
            let grads = random_matrix(m, d, rng);
            let weights = Weights::uniform(m)?;
            if protocol == CostProtocol::CssClassical {
                run_classical(&grads, &weights, &cfg, rng, &mut channel)?;
            } else {
                run_quantum(&grads, &weights, &cfg, shots as usize, rng, &mut channel)?;
            }
        }
        CostProtocol::Bqbc => {
            let cfg = BqbcConfig::new(m, base.l0, CountingMode::Quantum { counting_qubits: t });
            for _ in 0..d {
                let bits = |rng: &mut SimRng| -> Vec<Vec<u8>> {
                    (0..m).map(|_| (0..base.l0).map(|_| rng.random_range(0..2u8)).collect()).collect()
                };
                let (a, b) = (bits(rng), bits(rng));
                oracle_calls += run_bqbc_estimate(&cfg, &a, &b, rng, &mut channel)?.oracle_calls;
            }
        }
        CostProtocol::Ghz => {
            let cfg = GhzConfig {
                m,
                shots_per_quadrature: shots as usize,
                distributor: Distributor::Server,
            };
            for g in random_matrix(d, m, rng) {
                ghz_estimate_sum(&g, &cfg, rng, &mut channel)?;
            }
        }
        CostProtocol::Sms => {
            let cfg = SmsConfig {
                m,
                h: base.h,
                repetitions: 1,
            };
            for g in random_matrix(d, m, rng) {
                sms_run(&g, &cfg, SmsAdversary::None, rng, &mut channel)?;
            }
        }
    }
    let ledger = channel.ledger();
    let qubits = ledger.total_qubits();
    let classical_bits = ledger.total_classical_bits();
    let metric = match (protocol, axis) {
        (_, SweepAxis::CountingQubits) => oracle_calls,
        (CostProtocol::CssClassical, _) => classical_bits,
        _ => qubits,
    };
    Ok(CostRow {
        value,
        qubits,
        classical_bits,
        oracle_calls,
        metric,
    })
}

/// Run one sweep.
pub fn run_sweep(sweep: &CostSweep, base: &CostsSection, rng: &mut SimRng) -> Result<SweepResult> {
    if sweep.axis == SweepAxis::CountingQubits && sweep.protocol != CostProtocol::Bqbc {
        return Err(Error::Config("only BQBC has a counting-qubit axis".into()));
    }
    let rows: Vec<CostRow> = sweep
        .values
        .iter()
        .map(|v| measure(sweep.protocol, sweep.axis, *v, base, rng))
        .collect::<Result<_>>()?;
    let metric = match (sweep.protocol, sweep.axis) {
        (_, SweepAxis::CountingQubits) => "oracle_calls",
        (CostProtocol::CssClassical, _) => "classical_bits",
        _ => "qubits",
    };
    let (slope, exact_law) = if sweep.axis == SweepAxis::CountingQubits {
        let d = base.parameters as u64;
        let law = rows.iter().all(|r| r.oracle_calls == d * ((1u64 << r.value) - 1));
        (None, Some(law))
    } else {
        let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.value as f64, r.metric as f64)).collect();
        (log_log_slope(&points), None)
    };
    let pass = match (slope, sweep.expected_slope, sweep.tolerance, exact_law) {
        (_, _, _, Some(law)) => law,
        (Some(s), Some(e), Some(tol), _) => (s - e).abs() <= tol,
        (Some(_), _, _, _) => true,
        (None, _, _, _) => false,
    };
    Ok(SweepResult {
        protocol: sweep.protocol,
        axis: sweep.axis,
        metric,
        rows,
        slope,
        expected_slope: sweep.expected_slope,
        tolerance: sweep.tolerance,
        exact_law,
        pass,
    })
}

/// Run the configured sweeps, or the built-in set when none are listed.
pub fn cmd_costs(cfg: &ExperimentConfig) -> Result<CostTable> {
    let sweeps = if cfg.costs.sweeps.is_empty() {
        default_sweeps()
    } else {
        cfg.costs.sweeps.clone()
    };
    let mut rng = stream(cfg.seed, COST_STREAM);
    let sweeps = sweeps
        .iter()
        .map(|s| run_sweep(s, &cfg.costs, &mut rng))
        .collect::<Result<_>>()?;
    Ok(CostTable {
        seed: cfg.seed,
        config_digest: cfg.digest(),
        sweeps,
    })
}
