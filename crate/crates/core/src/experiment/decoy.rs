//! Intercept-resend detection sweep over the number of decoys.

use serde::Serialize;

use super::config::ExperimentConfig;
use crate::channel::{DecoyConfig, DecoyGuard, EveModel};
use crate::error::{Error, Result};

const DECOY_SWEEP_STREAM: u64 = 0x30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecoyRow {
    pub n_d: usize,
    pub trials: usize,
    pub detected: usize,
    pub detection_rate: f64,
    /// `1 - (3/4)^n_d`.
    pub predicted: f64,
    /// Binomial standard deviation of the rate at `predicted`.
    pub sigma: f64,
    pub within_3_sigma: bool,
    /// Detections with the eavesdropper switched off.
    pub false_positives: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecoyTable {
    pub seed: u64,
    pub config_digest: String,
    pub payload_qubits: usize,
    pub rows: Vec<DecoyRow>,
}

pub fn predicted_detection(n_d: usize) -> f64 {
    1.0 - 0.75f64.powi(n_d as i32)
}

fn detections(n_d: usize, trials: usize, q: usize, seed: u64, eve: EveModel) -> Result<usize> {
    let mut guard = DecoyGuard::new(DecoyConfig { n_d: Some(n_d), seed }, eve);
    let mut hits = 0;
    for _ in 0..trials {
        let (_, check) = guard.check(q)?;
        hits += usize::from(check.eavesdropper_detected);
    }
    Ok(hits)
}

/// Empirical detection rate for each `n_d` in the sweep, with and without Eve.
pub fn cmd_decoy(cfg: &ExperimentConfig) -> Result<DecoyTable> {
    let dc = &cfg.decoy;
    if dc.trials == 0 || dc.sweep.is_empty() || dc.sweep.contains(&0) {
        return Err(Error::Config("decoy sweep needs positive n_d values and trials".into()));
    }
    let base = cfg.seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(DECOY_SWEEP_STREAM);
    let rows = dc
        .sweep
        .iter()
        .enumerate()
        .map(|(i, &n_d)| {
            let seed = base.wrapping_add(2 * i as u64);
            let eve = EveModel::InterceptResend { seed: seed + 1 };
            let detected = detections(n_d, dc.trials, dc.payload_qubits, seed, eve)?;
            let false_positives = detections(n_d, dc.trials, dc.payload_qubits, seed, EveModel::None)?;
            let predicted = predicted_detection(n_d);
            let sigma = (predicted * (1.0 - predicted) / dc.trials as f64).sqrt();
            let rate = detected as f64 / dc.trials as f64;
            Ok(DecoyRow {
                n_d,
                trials: dc.trials,
                detected,
                detection_rate: rate,
                predicted,
                sigma,
                within_3_sigma: (rate - predicted).abs() <= 3.0 * sigma,
                false_positives,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DecoyTable {
        seed: cfg.seed,
        config_digest: cfg.digest(),
        payload_qubits: dc.payload_qubits,
        rows,
    })
}
