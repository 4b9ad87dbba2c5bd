//! GHZ aggregation: every client rotates its share of an `(m+1)`-qubit GHZ
//! state by `Phase(-g_k)`, the server disentangles with CNOTs and reads
//! `Phi = sum g_k` from X- and Y-quadrature statistics of its own qubit.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{wrap_angle, PhaseEstimate};
use crate::channel::{Channel, PartyId, Protocol};
use crate::error::{domain, Error, Result};
use crate::statevector::{Gate, StateVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distributor {
    Server,
    /// Client 0 prepares and distributes the GHZ state.
    TrustedClient,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GhzConfig {
    pub m: usize,
    pub shots_per_quadrature: usize,
    pub distributor: Distributor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrature {
    /// `P(0) = (1 + cos Phi) / 2`.
    X,
    /// `P(0) = (1 + sin Phi) / 2`.
    Y,
}

/// `(|0...0> + |1...1>) / sqrt 2` over `m + 1` qubits; qubit 0 is the server's.
pub fn ghz_prepare(m: usize) -> Result<StateVector> {
    if m == 0 {
        return Err(domain("GHZ aggregation needs at least one client"));
    }
    let mut s = StateVector::basis(m + 1, 0)?;
    s.apply_gate(Gate::H, 0)?;
    for k in 1..=m {
        s.apply_controlled(Gate::X, &[0], k)?;
    }
    Ok(s)
}

/// Client `k` applies `Phase(-g)` to its qubit `k + 1`.
pub fn ghz_client_encode(state: &mut StateVector, k: usize, g: f64) -> Result<()> {
    if !g.is_finite() {
        return Err(domain("non-finite gradient phase"));
    }
    state.apply_gate(Gate::Phase(-g), k + 1)
}

/// Qubits the server CNOTs from its own qubit during readout.
#[derive(Clone, Copy)]
enum Partners {
    All,
    Only(usize),
}

fn disentangle_and_rotate(state: &mut StateVector, m: usize, partners: Partners, quadrature: Quadrature) -> Result<()> {
    if state.num_qubits() != m + 1 {
        return Err(domain(format!("expected {} qubits, got {}", m + 1, state.num_qubits())));
    }
    match partners {
        Partners::All => {
            for k in 1..=m {
                state.apply_controlled(Gate::X, &[0], k)?;
            }
        }
        Partners::Only(k) => state.apply_controlled(Gate::X, &[0], k + 1)?,
    }
    if quadrature == Quadrature::Y {
        state.apply_gate(Gate::S, 0)?;
    }
    state.apply_gate(Gate::H, 0)
}

fn residual_abort(m: usize) -> Error {
    Error::ProtocolAbort(format!("returned client qubits of a {m}-client GHZ state were not all |0>"))
}

/// One readout: disentangle, rotate into `quadrature`, measure everything and
/// return the server bit. Aborts if any client qubit reads 1.
pub fn ghz_decode_shot<R: Rng + ?Sized>(
    mut state: StateVector,
    m: usize,
    quadrature: Quadrature,
    rng: &mut R,
) -> Result<u8> {
    disentangle_and_rotate(&mut state, m, Partners::All, quadrature)?;
    let outcome = state.measure(state.full_range(), rng)?;
    if outcome & ((1 << m) - 1) != 0 {
        return Err(residual_abort(m));
    }
    Ok((outcome >> m) as u8)
}

/// `shots` readouts of identically prepared copies of `state`; returns the
/// number of zeros. Aborts if any shot shows a client qubit in `|1>`.
pub fn ghz_quadrature_counts<R: Rng + ?Sized>(
    state: &StateVector,
    m: usize,
    quadrature: Quadrature,
    shots: usize,
    rng: &mut R,
) -> Result<usize> {
    counts_with(state, m, Partners::All, quadrature, shots, rng)
}

fn counts_with<R: Rng + ?Sized>(
    state: &StateVector,
    m: usize,
    partners: Partners,
    quadrature: Quadrature,
    shots: usize,
    rng: &mut R,
) -> Result<usize> {
    let mut s = state.clone();
    disentangle_and_rotate(&mut s, m, partners, quadrature)?;
    let counts: BTreeMap<usize, usize> = s.sample_counts(s.full_range(), shots, rng)?;
    let mut zeros = 0;
    for (outcome, c) in counts {
        if outcome & ((1 << m) - 1) != 0 {
            return Err(residual_abort(m));
        }
        if outcome >> m == 0 {
            zeros += c;
        }
    }
    Ok(zeros)
}

/// `Phi = atan2(2 f_Y - 1, 2 f_X - 1)` from the two quadratures of `state`.
pub fn ramsey_estimate<R: Rng + ?Sized>(state: &StateVector, m: usize, shots: usize, rng: &mut R) -> Result<PhaseEstimate> {
    ramsey_with(state, m, Partners::All, shots, rng)
}

fn ramsey_with<R: Rng + ?Sized>(
    state: &StateVector,
    m: usize,
    partners: Partners,
    shots: usize,
    rng: &mut R,
) -> Result<PhaseEstimate> {
    let fx = counts_with(state, m, partners, Quadrature::X, shots, rng)? as f64 / shots as f64;
    let fy = counts_with(state, m, partners, Quadrature::Y, shots, rng)? as f64 / shots as f64;
    Ok(PhaseEstimate {
        angle: wrap_angle((2.0 * fy - 1.0).atan2(2.0 * fx - 1.0)),
        standard_error: 1.0 / (shots as f64).sqrt(),
        shots_used: 2 * shots as u64,
    })
}

fn charge_distribution(cfg: &GhzConfig, shots: u64, channel: &mut Channel) -> Result<()> {
    let source = match cfg.distributor {
        Distributor::Server => PartyId::Server,
        Distributor::TrustedClient => PartyId::Client(0),
    };
    let mut outbound: Vec<PartyId> = (0..cfg.m).map(PartyId::Client).filter(|p| *p != source).collect();
    if source != PartyId::Server {
        outbound.insert(0, PartyId::Server);
    }
    for to in outbound {
        channel.charge_quantum(source, to, 1, shots, Protocol::Ghz)?;
    }
    for k in 0..cfg.m {
        channel.charge_quantum(PartyId::Client(k), PartyId::Server, 1, shots, Protocol::Ghz)?;
    }
    Ok(())
}

/// Estimate `sum_k g_k mod 2 pi` for one parameter.
pub fn ghz_estimate_sum<R: Rng + ?Sized>(
    gradients: &[f64],
    cfg: &GhzConfig,
    rng: &mut R,
    channel: &mut Channel,
) -> Result<PhaseEstimate> {
    if gradients.len() != cfg.m {
        return Err(domain(format!("expected {} client gradients", cfg.m)));
    }
    if cfg.shots_per_quadrature == 0 {
        return Err(domain("at least one shot per quadrature required"));
    }
    let mut state = ghz_prepare(cfg.m)?;
    for (k, g) in gradients.iter().enumerate() {
        ghz_client_encode(&mut state, k, *g)?;
    }
    let est = ramsey_estimate(&state, cfg.m, cfg.shots_per_quadrature, rng)?;
    charge_distribution(cfg, est.shots_used, channel)?;
    Ok(est)
}

/// Bell pair between the server and client `target`, every other client
/// qubit in `|0>`.
pub fn pairing_state(m: usize, target: usize) -> Result<StateVector> {
    if target >= m {
        return Err(domain(format!("client {target} does not exist")));
    }
    let mut s = StateVector::basis(m + 1, 0)?;
    s.apply_gate(Gate::H, 0)?;
    s.apply_controlled(Gate::X, &[0], target + 1)?;
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairingReport {
    pub target: usize,
    pub recovered: f64,
    pub target_gradient: f64,
    /// Circular distance between `recovered` and the target gradient.
    pub leaked_gradient_error: f64,
    pub standard_error: f64,
}

/// A server that distributes a Bell pair with client `target` instead of a
/// GHZ state, and disentangles only that client on readout, learns
/// `g_target` alone. Nothing in the returned qubits reveals the substitution.
pub fn ghz_malicious_pairing_demo<R: Rng + ?Sized>(
    gradients: &[f64],
    cfg: &GhzConfig,
    target: usize,
    rng: &mut R,
    channel: &mut Channel,
) -> Result<PairingReport> {
    if cfg.distributor == Distributor::TrustedClient {
        return Err(Error::AttackUnavailable(
            "the GHZ state is distributed by a trusted client, not the server".into(),
        ));
    }
    if gradients.len() != cfg.m {
        return Err(domain(format!("expected {} client gradients", cfg.m)));
    }
    let mut state = pairing_state(cfg.m, target)?;
    for (k, g) in gradients.iter().enumerate() {
        ghz_client_encode(&mut state, k, *g)?;
    }
    let est = ramsey_with(&state, cfg.m, Partners::Only(target), cfg.shots_per_quadrature, rng)?;
    charge_distribution(cfg, est.shots_used, channel)?;
    let truth = wrap_angle(gradients[target]);
    Ok(PairingReport {
        target,
        recovered: est.angle,
        target_gradient: gradients[target],
        leaked_gradient_error: super::angle_distance(est.angle, truth),
        standard_error: est.standard_error,
    })
}

/// Probability of reading 0 in `quadrature` for a pure GHZ phase `phi`.
#[cfg(test)]
pub(crate) fn p_zero(phi: f64, quadrature: Quadrature) -> f64 {
    match quadrature {
        Quadrature::X => (1.0 + phi.cos()) / 2.0,
        Quadrature::Y => (1.0 + phi.sin()) / 2.0,
    }
}

#[cfg(test)]
pub(crate) fn measure_client(state: &mut StateVector, k: usize, rng: &mut impl Rng) -> Result<usize> {
    state.apply_gate(Gate::H, k + 1)?;
    state.measure(crate::statevector::QubitRange::new(k + 1, 1), rng)
}
