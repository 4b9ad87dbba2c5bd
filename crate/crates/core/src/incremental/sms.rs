//! Secure multiparty summation: client 0 Fourier-encodes its integer, fans
//! the register out to an ancilla that travels the ring collecting
//! `e^{2 pi i g_k l / 2^h}` phases, and after uncomputing the ancilla the
//! server's inverse QFT reveals only `sum g_k mod 2^h`.
//!
//! Register 1 is qubits `0..h`, the ancilla `h..2h`.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{wrap_angle, PhaseEstimate};
use crate::channel::{Channel, PartyId, Protocol};
use crate::error::{domain, Error, Result};
use crate::statevector::{Gate, QubitRange, StateVector};

/// Largest `2h` simulated with an explicit ancilla register.
pub const DENSE_SMS_QUBITS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmsConfig {
    pub m: usize,
    pub h: usize,
    pub repetitions: usize,
}

impl SmsConfig {
    /// `delta = 2 pi / 2^h`.
    pub fn delta(&self) -> f64 {
        TAU / (1u64 << self.h) as f64
    }

    pub fn backend(&self) -> SmsBackend {
        if 2 * self.h <= DENSE_SMS_QUBITS {
            SmsBackend::Dense
        } else {
            SmsBackend::Mirrored
        }
    }
}

/// How the ancilla is simulated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmsBackend {
    /// Register 1 and the ancilla as one `2h`-qubit state.
    Dense,
    /// Register 1 only. Honest parties keep the ancilla an exact copy of
    /// register 1 in every branch, so phases applied to the ancilla equal
    /// phases on register 1 and the uncompute always returns `|0>`.
    Mirrored,
}

/// Misbehaviour of one client while it holds the ancilla.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmsAdversary {
    None,
    /// Apply an inverse QFT to the ancilla to extract the phase.
    InverseQftAncilla { client: usize },
    /// Measure the ancilla in the computational basis.
    MeasureAncilla { client: usize },
}

/// `ceil(log2(pi m / eps))`, so that `m delta / 2 <= eps`.
pub fn h_for_epsilon(m: usize, epsilon: f64) -> usize {
    (PI * m as f64 / epsilon).log2().ceil().max(1.0) as usize
}

/// `round(wrap(grad) / delta) mod 2^h`.
pub fn sms_quantize(gradient: f64, h: usize) -> Result<u64> {
    if !gradient.is_finite() {
        return Err(domain("non-finite gradient"));
    }
    let n = 1u64 << h;
    let delta = TAU / n as f64;
    Ok((wrap_angle(gradient) / delta).round() as u64 % n)
}

fn check_h(h: usize) -> Result<()> {
    if h == 0 || h > 30 {
        return Err(domain("h must be in 1..=30"));
    }
    Ok(())
}

/// `2^{-h/2} sum_l e^{2 pi i g1 l / 2^h} |l>|l>`.
pub fn sms_initial_state(g1: u64, h: usize) -> Result<StateVector> {
    check_h(h)?;
    if g1 >= 1 << h {
        return Err(domain(format!("{g1} does not fit in {h} bits")));
    }
    let mut s = StateVector::basis(2 * h, (g1 as usize) << h)?;
    s.qft(QubitRange::new(0, h))?;
    for j in 0..h {
        s.apply_controlled(Gate::X, &[j], h + j)?;
    }
    Ok(s)
}

/// Phase `e^{2 pi i g l / 2^h}` on the value `l` of `ancilla`, one phase gate
/// per qubit.
pub fn sms_client_accumulate(state: &mut StateVector, g: u64, ancilla: QubitRange) -> Result<()> {
    let h = ancilla.len;
    let n = (1u64 << h) as f64;
    for j in 0..h {
        let weight = (1u64 << (h - 1 - j)) as f64;
        let theta = TAU * (g % (1 << h)) as f64 * weight / n;
        if theta != 0.0 {
            state.apply_gate(Gate::Phase(theta), ancilla.start + j)?;
        }
    }
    Ok(())
}

/// Uncompute the ancilla, measure it, and hand back register 1. Any nonzero
/// ancilla outcome is tampering.
pub fn sms_verify_and_release<R: Rng + ?Sized>(mut state: StateVector, h: usize, rng: &mut R) -> Result<StateVector> {
    if state.num_qubits() != 2 * h {
        return Err(domain(format!("expected {} qubits", 2 * h)));
    }
    for j in 0..h {
        state.apply_controlled(Gate::X, &[j], h + j)?;
    }
    let outcome = state.measure(QubitRange::new(h, h), rng)?;
    if outcome != 0 {
        return Err(Error::TamperDetected(format!(
            "ancilla returned {} instead of all zeros",
            crate::statevector::format_bits(outcome, h)
        )));
    }
    state.extract_register(QubitRange::new(0, h))
}

/// Inverse QFT and measurement of the released register.
pub fn sms_server_decode<R: Rng + ?Sized>(mut state: StateVector, rng: &mut R) -> Result<u64> {
    let range = state.full_range();
    state.iqft(range)?;
    Ok(state.measure(range, rng)? as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SmsOutcome {
    /// Majority-vote decoded `sum g mod 2^h`.
    pub sum: u64,
    pub estimate: PhaseEstimate,
    /// Repetitions agreeing with the majority.
    pub agreeing: usize,
}

fn charge_repetition(cfg: &SmsConfig, channel: &mut Channel) -> Result<()> {
    let reps = cfg.repetitions as u64;
    if cfg.m > 1 {
        for k in 0..cfg.m {
            let next = (k + 1) % cfg.m;
            channel.charge_quantum(PartyId::Client(k), PartyId::Client(next), cfg.h, reps, Protocol::Sms)?;
        }
    }
    channel.charge_quantum(PartyId::Client(0), PartyId::Server, cfg.h, reps, Protocol::Sms)
}

fn run_dense<R: Rng + ?Sized>(g: &[u64], cfg: &SmsConfig, adversary: SmsAdversary, rng: &mut R) -> Result<StateVector> {
    let h = cfg.h;
    let ancilla = QubitRange::new(h, h);
    let mut state = sms_initial_state(g[0], h)?;
    for (k, gk) in g.iter().enumerate().skip(1) {
        sms_client_accumulate(&mut state, *gk, ancilla)?;
        match adversary {
            SmsAdversary::InverseQftAncilla { client } if client == k => state.iqft(ancilla)?,
            SmsAdversary::MeasureAncilla { client } if client == k => {
                state.measure(ancilla, rng)?;
            }
            _ => {}
        }
    }
    sms_verify_and_release(state, h, rng)
}

fn run_mirrored(g: &[u64], cfg: &SmsConfig) -> Result<StateVector> {
    let h = cfg.h;
    let range = QubitRange::new(0, h);
    let mut state = StateVector::basis(h, g[0] as usize)?;
    state.qft(range)?;
    for gk in &g[1..] {
        sms_client_accumulate(&mut state, *gk, range)?;
    }
    Ok(state)
}

/// One parameter: quantize, run the ring `p` times, majority-vote.
pub fn sms_run<R: Rng + ?Sized>(
    gradients: &[f64],
    cfg: &SmsConfig,
    adversary: SmsAdversary,
    rng: &mut R,
    channel: &mut Channel,
) -> Result<SmsOutcome> {
    check_h(cfg.h)?;
    if gradients.len() != cfg.m || cfg.m == 0 {
        return Err(domain(format!("expected {} client gradients", cfg.m)));
    }
    if cfg.repetitions == 0 {
        return Err(domain("at least one repetition required"));
    }
    let backend = cfg.backend();
    if backend == SmsBackend::Mirrored && adversary != SmsAdversary::None {
        return Err(domain(format!(
            "adversarial SMS runs need 2h <= {DENSE_SMS_QUBITS} qubits"
        )));
    }
    let g: Vec<u64> = gradients.iter().map(|x| sms_quantize(*x, cfg.h)).collect::<Result<_>>()?;
    charge_repetition(cfg, channel)?;
    let mut votes: BTreeMap<u64, usize> = BTreeMap::new();
    for _ in 0..cfg.repetitions {
        let released = match backend {
            SmsBackend::Dense => run_dense(&g, cfg, adversary, rng)?,
            SmsBackend::Mirrored => run_mirrored(&g, cfg)?,
        };
        *votes.entry(sms_server_decode(released, rng)?).or_default() += 1;
    }
    let (sum, agreeing) = votes
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(s, c)| (*s, *c))
        .expect("at least one repetition");
    Ok(SmsOutcome {
        sum,
        estimate: PhaseEstimate {
            angle: sum as f64 * cfg.delta(),
            standard_error: cfg.m as f64 * cfg.delta() / 2.0,
            shots_used: cfg.repetitions as u64,
        },
        agreeing,
    })
}

/// Register-1 state the server receives for a given gradient vector.
#[cfg(test)]
pub(crate) fn released_state(g: &[u64], h: usize, rng: &mut impl Rng) -> Result<StateVector> {
    let cfg = SmsConfig {
        m: g.len(),
        h,
        repetitions: 1,
    };
    run_dense(g, &cfg, SmsAdversary::None, rng)
}
