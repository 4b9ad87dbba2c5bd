//! Blind quantum bipartite correlator aggregation.
//!
//! The server holds fixed-point weight bits `a_ki` and prepares
//! `sum_{k,i} |k,i>|a_ki>` over `q = ceil(log2(m l0))` index qubits plus one
//! ancilla. Each client `k` hides its gradient bits `b_ki` as phases
//! `(-1)^{a_ki b_ki}` on its own block, and quantum counting over the ring
//! pass estimates `sum a_ki b_ki`.
//!
//! Register layout: index value `z = k * l_pad + i` on qubits `0..q` (client
//! block in the high bits), ancilla on qubit `q`. `m` and `l0` are padded to
//! powers of two with `a = b = 0` in the padding.

mod attack;
mod redundant;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{Channel, PartyId, Protocol};
use crate::error::{domain, Error, Result};
use crate::statevector::{
    counting_error_bound, estimate_iterate_phase, reflect_about_uniform, CountEstimate, Gate, QubitRange, StateVector,
    DEFAULT_QUBIT_CAP,
};

pub use attack::{malicious_server_attack_demo, AttackReport, ServerBehaviour};
pub use redundant::{leak_probability, redundant_encode, redundant_encode_with, redundant_reconcile, LeakBound, Method, RedundantCode};

/// Binary expansion `value ≈ sum_i 2^(exponent - i) bits[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointCode {
    pub exponent: i32,
    pub bits: Vec<u8>,
}

impl FixedPointCode {
    pub fn reconstruct(&self) -> f64 {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b == 1)
            .map(|(i, _)| ((self.exponent - i as i32) as f64).exp2())
            .sum()
    }
}

/// Greedy truncating expansion of `0 <= value < 2^(exponent + 1)`.
pub fn encode_fixed_point(value: f64, exponent: i32, l0: usize) -> Result<FixedPointCode> {
    let top = ((exponent + 1) as f64).exp2();
    if !(0.0..top).contains(&value) {
        return Err(domain(format!("{value} is outside [0, 2^{})", exponent + 1)));
    }
    let mut rest = value;
    let bits = (0..l0)
        .map(|i| {
            let unit = ((exponent - i as i32) as f64).exp2();
            if rest >= unit {
                rest -= unit;
                1
            } else {
                0
            }
        })
        .collect();
    Ok(FixedPointCode { exponent, bits })
}

/// Per-client bit rows, `codes[k][i]`.
pub type BitMatrix = Vec<Vec<u8>>;

/// Index-register geometry for `m` clients of `l0` bits each.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub m: usize,
    pub l0: usize,
    pub m_pad: usize,
    pub l_pad: usize,
    pub index_qubits: usize,
}

impl Layout {
    pub fn new(m: usize, l0: usize) -> Result<Self> {
        if m == 0 || l0 == 0 {
            return Err(domain("BQBC needs m >= 1 and l0 >= 1"));
        }
        let (m_pad, l_pad) = (m.next_power_of_two(), l0.next_power_of_two());
        let index_qubits = ((m_pad * l_pad).trailing_zeros() as usize).max(1);
        Ok(Self {
            m,
            l0,
            m_pad,
            l_pad,
            index_qubits,
        })
    }

    /// Index qubits plus the ancilla.
    pub fn width(&self) -> usize {
        self.index_qubits + 1
    }

    pub fn num_indices(&self) -> usize {
        1 << self.index_qubits
    }

    /// `(client, bit)` of basis state `idx`, or `None` in the padding.
    pub fn locate(&self, idx: usize) -> Option<(usize, usize)> {
        let z = idx >> 1;
        let (k, i) = (z / self.l_pad, z % self.l_pad);
        (k < self.m && i < self.l0).then_some((k, i))
    }

    pub fn block_of(&self, idx: usize) -> usize {
        (idx >> 1) / self.l_pad
    }

    fn check_codes(&self, codes: &[Vec<u8>], what: &str) -> Result<()> {
        if codes.len() != self.m {
            return Err(domain(format!("{what}: expected {} rows, got {}", self.m, codes.len())));
        }
        for row in codes {
            if row.len() != self.l0 || row.iter().any(|b| *b > 1) {
                return Err(domain(format!("{what}: rows must hold {} bits", self.l0)));
            }
        }
        Ok(())
    }

    fn weight_bit(&self, a: &[Vec<u8>], z: usize) -> usize {
        let (k, i) = (z / self.l_pad, z % self.l_pad);
        if k < self.m && i < self.l0 {
            a[k][i] as usize
        } else {
            0
        }
    }
}

/// Honest index state `2^(-q/2) sum_z |z>|a_z>`.
pub fn server_prepare_index_state(layout: &Layout, a: &[Vec<u8>]) -> Result<StateVector> {
    layout.check_codes(a, "weight codes")?;
    if layout.width() > DEFAULT_QUBIT_CAP {
        return Err(Error::Capacity {
            requested: layout.width(),
            cap: DEFAULT_QUBIT_CAP,
        });
    }
    let n = layout.num_indices();
    let amp = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
    let mut amps = vec![Complex64::new(0.0, 0.0); 2 * n];
    for z in 0..n {
        amps[(z << 1) | layout.weight_bit(a, z)] = amp;
    }
    StateVector::from_amplitudes(amps)
}

/// Undo the weight encoding: flip the ancilla wherever `a_z = 1`.
fn toggle_weight_encoding(buf: &mut [Complex64], layout: &Layout, a: &[Vec<u8>]) {
    for z in 0..layout.num_indices() {
        if layout.weight_bit(a, z) == 1 {
            buf.swap(z << 1, (z << 1) | 1);
        }
    }
}

/// Decode the ancilla, measure the index register in the X basis and accept
/// iff every outcome is `+`. The state is consumed.
pub fn client_verify_uniform<R: Rng + ?Sized>(
    mut state: StateVector,
    layout: &Layout,
    a: &[Vec<u8>],
    rng: &mut R,
) -> Result<bool> {
    layout.check_codes(a, "weight codes")?;
    if state.num_qubits() != layout.width() {
        return Err(domain("verification state has the wrong width"));
    }
    toggle_weight_encoding(state.amplitudes_mut(), layout, a);
    for qb in 0..layout.index_qubits {
        state.apply_gate(Gate::H, qb)?;
    }
    Ok(state.measure(QubitRange::new(0, layout.index_qubits), rng)? == 0)
}

/// Phase `pi` that client `k` applies to basis state `idx`: on `anc = 1`
/// where `b_ki = 1`, and with a padding bit on every `anc = 0` state of the
/// block.
fn client_phase(layout: &Layout, k: usize, b_k: &[u8], pad: bool, idx: usize) -> f64 {
    if layout.block_of(idx) != k {
        return 0.0;
    }
    let anc = idx & 1;
    let i = (idx >> 1) % layout.l_pad;
    let marked = if anc == 1 {
        i < layout.l0 && b_k[i] == 1
    } else {
        pad
    };
    if marked {
        PI
    } else {
        0.0
    }
}

/// Client `k`'s phase encoding on its block of the index register.
pub fn client_phase_encode(state: &mut StateVector, layout: &Layout, k: usize, b_k: &[u8], pad: bool) -> Result<()> {
    if k >= layout.m {
        return Err(domain(format!("client {k} has no block among {} clients", layout.m)));
    }
    if b_k.len() != layout.l0 || b_k.iter().any(|b| *b > 1) {
        return Err(domain(format!("gradient code must hold {} bits", layout.l0)));
    }
    if state.num_qubits() != layout.width() {
        return Err(domain("state has the wrong width for this layout"));
    }
    let range = state.full_range();
    state.apply_diagonal(|idx| client_phase(layout, k, b_k, pad, idx), range)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountingMode {
    /// Phase estimation with `t` counting qubits.
    Quantum { counting_qubits: usize },
    /// Single ring pass followed by direct enumeration of the sign-flipped
    /// amplitudes; isolates encoding effects from counting noise.
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BqbcConfig {
    pub m: usize,
    pub l0: usize,
    pub mode: CountingMode,
    /// Clients draw a `{0, pi}` pad per run and disclose it afterwards.
    pub padding: bool,
    /// Verification states checked by client 0 before each run.
    pub verifications: usize,
}

impl BqbcConfig {
    pub fn new(m: usize, l0: usize, mode: CountingMode) -> Self {
        Self {
            m,
            l0,
            mode,
            padding: false,
            verifications: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BqbcEstimate {
    /// `(1/(m l0)) sum a b` estimate.
    pub normalized: f64,
    /// Estimated `sum a b`, after removing the disclosed pads.
    pub count: f64,
    /// Counting outcome converted to marked states, before pad removal.
    pub raw_marked: f64,
    pub oracle_calls: u64,
    /// Counting error bound on `count` (`0` in exact mode).
    pub error_bound: f64,
    pub counting: Option<CountEstimate>,
}

/// One ring pass: every client applies its phase encoding in turn.
fn ring_signs(layout: &Layout, b: &[Vec<u8>], pads: &[bool]) -> Vec<f64> {
    (0..2 * layout.num_indices())
        .map(|idx| {
            let phase: f64 = (0..layout.m).map(|k| client_phase(layout, k, &b[k], pads[k], idx)).sum();
            if (phase / PI).round() as i64 % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

/// Apply the Grover diffusion about the honest index state: decode the
/// ancilla, reflect each ancilla slice about uniform, re-encode.
fn server_diffusion(buf: &mut [Complex64], layout: &Layout, a: &[Vec<u8>], scratch: &mut Vec<Complex64>) {
    toggle_weight_encoding(buf, layout, a);
    let n = layout.num_indices();
    for anc in 0..2 {
        scratch.clear();
        scratch.extend((0..n).map(|z| buf[(z << 1) | anc]));
        reflect_about_uniform(scratch);
        for (z, v) in scratch.iter().enumerate() {
            buf[(z << 1) | anc] = *v;
        }
    }
    toggle_weight_encoding(buf, layout, a);
}

fn charge_ring(channel: &mut Channel, layout: &Layout, repetitions: u64) -> Result<()> {
    let mut holder = PartyId::Server;
    for k in 0..layout.m {
        channel.charge_quantum(holder, PartyId::Client(k), layout.width(), repetitions, Protocol::Bqbc)?;
        holder = PartyId::Client(k);
    }
    channel.charge_quantum(holder, PartyId::Server, layout.width(), repetitions, Protocol::Bqbc)
}

/// Estimate `(1/(m l0)) sum_k sum_i a_ki b_ki`.
pub fn run_bqbc_estimate<R: Rng + ?Sized>(
    cfg: &BqbcConfig,
    a: &[Vec<u8>],
    b: &[Vec<u8>],
    rng: &mut R,
    channel: &mut Channel,
) -> Result<BqbcEstimate> {
    let layout = Layout::new(cfg.m, cfg.l0)?;
    layout.check_codes(a, "weight codes")?;
    layout.check_codes(b, "gradient codes")?;
    if let CountingMode::Quantum { counting_qubits } = cfg.mode {
        let total = counting_qubits + layout.width();
        if counting_qubits == 0 || total > DEFAULT_QUBIT_CAP {
            return Err(Error::Capacity {
                requested: total,
                cap: DEFAULT_QUBIT_CAP,
            });
        }
    }

    for _ in 0..cfg.verifications {
        let probe = server_prepare_index_state(&layout, a)?;
        let probe = channel.send_quantum(PartyId::Server, PartyId::Client(0), probe, Protocol::Bqbc)?;
        if !client_verify_uniform(probe, &layout, a, rng)? {
            return Err(Error::TamperDetected("index state failed the uniformity check".into()));
        }
    }

    let pads: Vec<bool> = (0..cfg.m).map(|_| cfg.padding && rng.random::<bool>()).collect();
    let signs = ring_signs(&layout, b, &pads);
    let work = server_prepare_index_state(&layout, a)?;
    let num_states = layout.num_indices();

    let (raw_marked, oracle_calls, error_bound, counting) = match cfg.mode {
        CountingMode::Exact => {
            let mut state = work;
            for k in 0..cfg.m {
                client_phase_encode(&mut state, &layout, k, &b[k], pads[k])?;
            }
            let marked = state.amplitudes().iter().filter(|v| v.re < 0.0).count();
            (marked as f64, 1, 0.0, None)
        }
        CountingMode::Quantum { counting_qubits } => {
            let mut scratch = Vec::with_capacity(num_states);
            let iterate = |buf: &mut [Complex64]| {
                buf.iter_mut().zip(&signs).for_each(|(v, s)| *v *= s);
                server_diffusion(buf, &layout, a, &mut scratch);
            };
            let (y, calls) = estimate_iterate_phase(&work, counting_qubits, iterate, rng)?;
            let est = CountEstimate::from_measurement(y, counting_qubits, num_states, calls);
            (est.estimate, calls, f64::NAN, Some(est))
        }
    };
    charge_ring(channel, &layout, oracle_calls)?;

    let pad_mass: usize = (0..cfg.m)
        .filter(|k| pads[*k])
        .map(|k| layout.l_pad - a[k].iter().filter(|v| **v == 1).count())
        .sum();
    for k in 0..cfg.m {
        if cfg.padding {
            channel.send_classical(PartyId::Client(k), PartyId::Server, 1, Protocol::Bqbc)?;
        }
    }
    let count = raw_marked - pad_mass as f64;
    let error_bound = match counting {
        Some(est) => counting_error_bound(raw_marked.max(0.0), num_states, est.counting_qubits),
        None => error_bound,
    };
    Ok(BqbcEstimate {
        normalized: count / (cfg.m * cfg.l0) as f64,
        count,
        raw_marked,
        oracle_calls,
        error_bound,
        counting,
    })
}

/// `sum_k sum_i a_ki b_ki` by direct enumeration.
pub fn brute_force_correlation(a: &[Vec<u8>], b: &[Vec<u8>]) -> usize {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).filter(|(x, y)| **x == 1 && **y == 1).count())
        .sum()
}

/// `t = ceil(log2(1/eps)) + 3`.
pub fn counting_qubits_for(epsilon: f64) -> usize {
    ((1.0 / epsilon).log2().ceil().max(0.0) as usize) + 3
}

/// Common exponents and error target for [`weighted_sum_via_convolution`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionConfig {
    pub l0: usize,
    /// Weights satisfy `0 <= w < 2^(u+1)`.
    pub weight_exponent: i32,
    /// Without an offset gradients satisfy `0 <= g < 2^(v+1)`; with it they
    /// satisfy `|g| < 2^v` and are shifted by the public constant `2^v`.
    pub gradient_exponent: i32,
    pub signed_gradients: bool,
    pub epsilon: f64,
    /// Substitute exact counting for every shift.
    pub exact: bool,
    pub padding: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvolutionEstimate {
    pub value: f64,
    pub error_bound: f64,
    pub oracle_calls: u64,
    /// `(shift, counting qubits, estimated correlation)` per shift.
    pub shifts: Vec<(usize, usize, f64)>,
}

/// Counting qubits for shift `lambda` under the geometric budget
/// `eps_lambda ∝ 2^(lambda/2)`.
pub fn shift_counting_qubits(cfg: &ConvolutionConfig, m: usize, lambda: usize, cap: usize) -> usize {
    let shifts = 2 * cfg.l0 - 1;
    let norm: f64 = (0..shifts).map(|l| (-(l as f64) / 2.0).exp2()).sum();
    let scale = ((cfg.weight_exponent + cfg.gradient_exponent) as f64).exp2();
    let c = cfg.epsilon / ((m * cfg.l0) as f64 * scale * norm);
    let eps = c * (lambda as f64 / 2.0).exp2();
    counting_qubits_for(eps).clamp(1, cap)
}

/// Estimate `sum_k w_k g_k` from bit-level correlations at every shift
/// `lambda`, recombined with weights `2^(u + v - lambda)`.
pub fn weighted_sum_via_convolution<R: Rng + ?Sized>(
    weights: &[f64],
    gradients: &[f64],
    cfg: &ConvolutionConfig,
    rng: &mut R,
    channel: &mut Channel,
) -> Result<ConvolutionEstimate> {
    let m = weights.len();
    if gradients.len() != m || m == 0 {
        return Err(domain("one gradient per weight required"));
    }
    let v = cfg.gradient_exponent;
    let offset = if cfg.signed_gradients { (v as f64).exp2() } else { 0.0 };
    let weight_codes: Vec<FixedPointCode> = weights
        .iter()
        .map(|w| encode_fixed_point(*w, cfg.weight_exponent, cfg.l0))
        .collect::<Result<_>>()?;
    let b: BitMatrix = gradients
        .iter()
        .map(|g| {
            if cfg.signed_gradients && g.abs() >= offset {
                return Err(domain(format!("gradient {g} exceeds 2^{v}")));
            }
            encode_fixed_point(g + offset, v, cfg.l0).map(|c| c.bits)
        })
        .collect::<Result<_>>()?;
    let layout = Layout::new(m, cfg.l0)?;
    let cap = DEFAULT_QUBIT_CAP - layout.width();
    let mut value = 0.0;
    let mut error_bound = 0.0;
    let mut oracle_calls = 0;
    let mut shifts = Vec::with_capacity(2 * cfg.l0 - 1);
    for lambda in 0..(2 * cfg.l0 - 1) {
        let shifted: BitMatrix = weight_codes
            .iter()
            .map(|code| {
                (0..cfg.l0)
                    .map(|j| if lambda >= j && lambda - j < cfg.l0 { code.bits[lambda - j] } else { 0 })
                    .collect()
            })
            .collect();
        let t = shift_counting_qubits(cfg, m, lambda, cap);
        let mode = if cfg.exact {
            CountingMode::Exact
        } else {
            CountingMode::Quantum { counting_qubits: t }
        };
        let bq = BqbcConfig {
            padding: cfg.padding,
            ..BqbcConfig::new(m, cfg.l0, mode)
        };
        let est = run_bqbc_estimate(&bq, &shifted, &b, rng, channel)?;
        let unit = ((cfg.weight_exponent + v - lambda as i32) as f64).exp2();
        value += unit * est.count;
        error_bound += unit * est.error_bound;
        oracle_calls += est.oracle_calls;
        shifts.push((lambda, if cfg.exact { 0 } else { t }, est.count));
    }
    let encoded_weight: f64 = weight_codes.iter().map(FixedPointCode::reconstruct).sum();
    Ok(ConvolutionEstimate {
        value: value - offset * encoded_weight,
        error_bound,
        oracle_calls,
        shifts,
    })
}
