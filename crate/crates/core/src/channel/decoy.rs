//! Decoy-state eavesdropper detection.
//!
//! Decoys are simulated as independent single-qubit states drawn from
//! `{|0>, |1>, |+>, |->}`; they never share a register with the payload.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{Ledger, LedgerEntry, PartyId, Protocol};
use crate::error::{domain, Error, Result};
use crate::statevector::{Gate, QubitRange, StateVector};
use crate::SimRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

/// A decoy preparation: `bit` 0/1 is `|0>`/`|1>` in Z and `|+>`/`|->` in X.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoyPrep {
    pub basis: Basis,
    pub bit: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoyConfig {
    /// Decoys per transmission; `None` uses one decoy per payload qubit.
    pub n_d: Option<usize>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum EveModel {
    #[default]
    None,
    /// Measure every decoy in a uniformly random Z/X basis and resend the
    /// observed eigenstate.
    InterceptResend { seed: u64 },
}

/// Decoy slots and preparations for one transmission of `q` payload qubits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecoyBatch {
    /// Sorted slot indices among `q + n_d`.
    pub positions: Vec<usize>,
    pub preparations: Vec<DecoyPrep>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DecoyCheck {
    pub checked: usize,
    pub mismatches: usize,
    pub eavesdropper_detected: bool,
}

pub fn decoy_wrap<R: Rng + ?Sized>(q: usize, n_d: usize, rng: &mut R) -> DecoyBatch {
    let mut positions = sample(rng, q + n_d, n_d).into_vec();
    positions.sort_unstable();
    let preparations = (0..n_d)
        .map(|_| DecoyPrep {
            basis: if rng.random::<bool>() { Basis::X } else { Basis::Z },
            bit: rng.random_range(0..2),
        })
        .collect();
    DecoyBatch { positions, preparations }
}

pub fn prepare_decoy(prep: DecoyPrep) -> StateVector {
    let mut s = StateVector::basis(1, prep.bit as usize).expect("one qubit");
    if prep.basis == Basis::X {
        s.apply_gate(Gate::H, 0).expect("qubit 0 exists");
    }
    s
}

fn measure_in<R: Rng + ?Sized>(state: &mut StateVector, basis: Basis, rng: &mut R) -> Result<u8> {
    if basis == Basis::X {
        state.apply_gate(Gate::H, 0)?;
    }
    let bit = state.measure(QubitRange::new(0, 1), rng)? as u8;
    if basis == Basis::X {
        state.apply_gate(Gate::H, 0)?;
    }
    Ok(bit)
}

/// Intercept-resend: every decoy is measured in a random basis, leaving it in
/// the observed eigenstate.
pub fn eve_intercept_resend<R: Rng + ?Sized>(decoys: &mut [StateVector], rng: &mut R) -> Result<()> {
    for d in decoys.iter_mut() {
        let basis = if rng.random::<bool>() { Basis::X } else { Basis::Z };
        measure_in(d, basis, rng)?;
    }
    Ok(())
}

/// Measure each decoy in its preparation basis and count disagreements.
pub fn decoy_verify<R: Rng + ?Sized>(
    decoys: &mut [StateVector],
    preparations: &[DecoyPrep],
    rng: &mut R,
) -> Result<DecoyCheck> {
    if decoys.len() != preparations.len() {
        return Err(domain(format!(
            "{} decoys received but {} preparations recorded",
            decoys.len(),
            preparations.len()
        )));
    }
    let mut mismatches = 0;
    for (d, p) in decoys.iter_mut().zip(preparations) {
        mismatches += usize::from(measure_in(d, p.basis, rng)? != p.bit);
    }
    Ok(DecoyCheck {
        checked: decoys.len(),
        mismatches,
        eavesdropper_detected: mismatches > 0,
    })
}

/// Classical side-channel bits for announcing `n_d` decoy slots among
/// `q + n_d`: a slot index plus basis and bit flags per decoy.
pub fn side_channel_bits(q: usize, n_d: usize) -> u64 {
    if n_d == 0 {
        return 0;
    }
    let slots = q + n_d;
    let index_bits = if slots <= 1 { 1 } else { usize::BITS - (slots - 1).leading_zeros() };
    n_d as u64 * (index_bits as u64 + 2)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DecoyStats {
    pub transmissions: u64,
    pub decoys: u64,
    pub mismatches: u64,
}

/// Decoy protection attached to a [`super::Channel`].
#[derive(Clone, Debug)]
pub struct DecoyGuard {
    config: DecoyConfig,
    eve: EveModel,
    rng: SimRng,
    eve_rng: SimRng,
    stats: DecoyStats,
}

impl DecoyGuard {
    pub fn new(config: DecoyConfig, eve: EveModel) -> Self {
        let eve_seed = match eve {
            EveModel::None => 0,
            EveModel::InterceptResend { seed } => seed,
        };
        Self {
            config,
            eve,
            rng: SimRng::seed_from_u64(config.seed),
            eve_rng: SimRng::seed_from_u64(eve_seed),
            stats: DecoyStats::default(),
        }
    }

    pub fn stats(&self) -> DecoyStats {
        self.stats
    }

    /// Run one decoy round for a `q`-qubit transmission.
    pub fn check(&mut self, q: usize) -> Result<(DecoyBatch, DecoyCheck)> {
        let n_d = self.config.n_d.unwrap_or(q);
        let batch = decoy_wrap(q, n_d, &mut self.rng);
        let mut decoys: Vec<StateVector> = batch.preparations.iter().map(|p| prepare_decoy(*p)).collect();
        if let EveModel::InterceptResend { .. } = self.eve {
            eve_intercept_resend(&mut decoys, &mut self.eve_rng)?;
        }
        let check = decoy_verify(&mut decoys, &batch.preparations, &mut self.rng)?;
        self.stats.transmissions += 1;
        self.stats.decoys += check.checked as u64;
        self.stats.mismatches += check.mismatches as u64;
        Ok((batch, check))
    }

    /// Charge the decoys and their side channel for `repetitions`
    /// transmissions of `q` qubits, aborting on a detected eavesdropper.
    pub(super) fn protect(
        &mut self,
        ledger: &mut Ledger,
        (from, to): (PartyId, PartyId),
        q: usize,
        repetitions: u64,
        round: u64,
    ) -> Result<()> {
        let mut qubits = 0u64;
        let mut bits = 0u64;
        let mut detected = None;
        for _ in 0..repetitions {
            let (batch, check) = self.check(q)?;
            let n_d = batch.preparations.len();
            qubits += n_d as u64;
            bits += side_channel_bits(q, n_d);
            if check.eavesdropper_detected {
                detected = Some(check);
                break;
            }
        }
        if qubits > 0 {
            ledger.push(LedgerEntry {
                from,
                to,
                protocol: Protocol::Decoy,
                round,
                qubits,
                classical_bits: bits,
            })?;
        }
        match detected {
            Some(check) => Err(Error::EavesdropperDetected {
                checked: check.checked,
                mismatches: check.mismatches,
            }),
            None => Ok(()),
        }
    }
}
