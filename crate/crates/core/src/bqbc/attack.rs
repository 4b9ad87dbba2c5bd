//! A cheating server that concentrates the index state on one `(k*, i*)`
//! and reads `b_k*i*` from the ancilla phase.

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use super::{client_phase_encode, client_verify_uniform, server_prepare_index_state, BqbcConfig, Layout};
use crate::error::{domain, Result};
use crate::statevector::{Gate, QubitRange, StateVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ServerBehaviour {
    Honest,
    /// Prepare `|k*, i*>|+>`.
    Concentrated { client: usize, bit: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AttackReport {
    pub trials: usize,
    pub detected: usize,
    pub detection_rate: f64,
    /// Trials whose verification passed.
    pub evaded: usize,
    /// Correct reads of the target bit among evading trials.
    pub leak_correct_evaded: usize,
    /// `None` when no trial evaded or the server was honest.
    pub leak_success_rate: Option<f64>,
    /// Correct-read rate over all trials (detection and readout use
    /// independent copies, so this estimates the same quantity).
    pub leak_success_rate_all: Option<f64>,
}

fn probe_state(layout: &Layout, client: usize, bit: usize) -> Result<StateVector> {
    if client >= layout.m || bit >= layout.l0 {
        return Err(domain(format!("target ({client}, {bit}) outside the {}x{} code", layout.m, layout.l0)));
    }
    let z = client * layout.l_pad + bit;
    let mut amps = vec![Complex64::new(0.0, 0.0); 2 * layout.num_indices()];
    let h = std::f64::consts::FRAC_1_SQRT_2;
    amps[z << 1] = Complex64::new(h, 0.0);
    amps[(z << 1) | 1] = Complex64::new(h, 0.0);
    StateVector::from_amplitudes(amps)
}

/// Run `trials` rounds in which client 0 verifies the server's state and the
/// server then tries to read the target gradient bit from a second copy
/// returned from the ring.
pub fn malicious_server_attack_demo<R: Rng + ?Sized>(
    cfg: &BqbcConfig,
    a: &[Vec<u8>],
    b: &[Vec<u8>],
    behaviour: ServerBehaviour,
    trials: usize,
    rng: &mut R,
) -> Result<AttackReport> {
    if trials == 0 {
        return Err(domain("attack demo needs at least one trial"));
    }
    let layout = Layout::new(cfg.m, cfg.l0)?;
    let mut detected = 0;
    let mut evaded = 0;
    let mut correct_evaded = 0;
    let mut correct_all = 0;
    for _ in 0..trials {
        let verification = match behaviour {
            ServerBehaviour::Honest => server_prepare_index_state(&layout, a)?,
            ServerBehaviour::Concentrated { client, bit } => probe_state(&layout, client, bit)?,
        };
        let passed = client_verify_uniform(verification, &layout, a, rng)?;
        if passed {
            evaded += 1;
        } else {
            detected += 1;
        }
        if let ServerBehaviour::Concentrated { client, bit } = behaviour {
            let mut state = probe_state(&layout, client, bit)?;
            for (k, row) in b.iter().enumerate() {
                let pad = cfg.padding && rng.random::<bool>();
                client_phase_encode(&mut state, &layout, k, row, pad)?;
            }
            let anc = layout.index_qubits;
            state.apply_gate(Gate::H, anc)?;
            let guess = state.measure(QubitRange::new(anc, 1), rng)? as u8;
            let hit = guess == b[client][bit];
            correct_all += usize::from(hit);
            if passed {
                correct_evaded += usize::from(hit);
            }
        }
    }
    let concentrated = matches!(behaviour, ServerBehaviour::Concentrated { .. });
    Ok(AttackReport {
        trials,
        detected,
        detection_rate: detected as f64 / trials as f64,
        evaded,
        leak_correct_evaded: correct_evaded,
        leak_success_rate: (concentrated && evaded > 0).then(|| correct_evaded as f64 / evaded as f64),
        leak_success_rate_all: concentrated.then(|| correct_all as f64 / trials as f64),
    })
}
