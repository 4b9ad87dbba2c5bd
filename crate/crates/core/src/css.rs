//! Pairwise one-time-pad masking (classical secret sharing) and its
//! amplitude-encoded SWAP-test variant.
//!
//! Gradients are quantized to fixed point, `g = round(grad * 2^f)`. Client
//! weights are exact rationals `N_i / D`, so the mask `(1/w_i) sum_k p_ik`
//! becomes `round(D * P_i / N_i)` and the server's weighted sum
//! `sum_i N_i y_i` cancels the pads up to a rounding residue of at most
//! `D / 2` (half a quantization step after dividing by `D`).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{Channel, PartyId, Protocol};
use crate::error::{domain, Result};
use crate::statevector::{swap_test, StateVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CssConfig {
    pub m: usize,
    pub d: usize,
    /// Pads live in `Z_R` with `R = 2^modulus_bits`.
    pub modulus_bits: u32,
    /// Fixed-point fraction bits `f`.
    pub frac_bits: u32,
}

impl Default for CssConfig {
    fn default() -> Self {
        Self {
            m: 4,
            d: 1,
            modulus_bits: 64,
            frac_bits: 40,
        }
    }
}

impl CssConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.d == 0 {
            return Err(domain("CSS needs m >= 1 and d >= 1"));
        }
        if !(32..=64).contains(&self.modulus_bits) {
            return Err(domain("pad modulus must be 2^32 ..= 2^64"));
        }
        if self.frac_bits >= self.modulus_bits {
            return Err(domain("fraction bits must be below the modulus width"));
        }
        Ok(())
    }

    pub fn modulus(&self) -> u128 {
        1u128 << self.modulus_bits
    }

    fn scale(&self) -> f64 {
        (self.frac_bits as f64).exp2()
    }
}

/// Client weights `w_i = numerators[i] / denominator`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Weights {
    pub numerators: Vec<u64>,
    pub denominator: u64,
}

impl Weights {
    /// `w_i = N_i / sum N`.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        if counts.is_empty() || counts.contains(&0) {
            return Err(domain("every client weight must be positive"));
        }
        Ok(Self {
            numerators: counts.to_vec(),
            denominator: counts.iter().sum(),
        })
    }

    pub fn uniform(m: usize) -> Result<Self> {
        Self::from_counts(&vec![1; m])
    }

    pub fn len(&self) -> usize {
        self.numerators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.numerators.is_empty()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.numerators
            .iter()
            .map(|n| *n as f64 / self.denominator as f64)
            .collect()
    }
}

/// Pads `s_ik` in `[0, R)` for one parameter index; the diagonal is zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PadMatrix {
    pub s: Vec<Vec<u64>>,
}

impl PadMatrix {
    pub fn sample<R: Rng + ?Sized>(m: usize, cfg: &CssConfig, rng: &mut R) -> Self {
        let mask = if cfg.modulus_bits == 64 {
            u64::MAX
        } else {
            (1u64 << cfg.modulus_bits) - 1
        };
        let s = (0..m)
            .map(|i| {
                (0..m)
                    .map(|k| if i == k { 0 } else { rng.random::<u64>() & mask })
                    .collect()
            })
            .collect();
        Self { s }
    }

    pub fn m(&self) -> usize {
        self.s.len()
    }
}

/// `p_ik = s_ik - s_ki mod R`.
pub fn compute_perturbations(pads: &PadMatrix, cfg: &CssConfig) -> Vec<Vec<u64>> {
    let r = cfg.modulus();
    let m = pads.m();
    (0..m)
        .map(|i| {
            (0..m)
                .map(|k| ((pads.s[i][k] as u128 + r - pads.s[k][i] as u128) % r) as u64)
                .collect()
        })
        .collect()
}

/// Unreduced `p_ik = s_ik - s_ki` for the exact (quantum) path.
pub fn compute_perturbations_exact(pads: &PadMatrix) -> Vec<Vec<i128>> {
    let m = pads.m();
    (0..m)
        .map(|i| (0..m).map(|k| pads.s[i][k] as i128 - pads.s[k][i] as i128).collect())
        .collect()
}

/// Largest quantized magnitude for which `sum_i N_i g_i` cannot wrap.
pub fn quantization_limit(cfg: &CssConfig, weights: &Weights) -> i128 {
    let half_r = (cfg.modulus() / 2) as i128;
    (half_r - weights.denominator as i128) / weights.denominator as i128
}

pub fn quantize(grad: f64, cfg: &CssConfig, weights: &Weights) -> Result<i128> {
    if !grad.is_finite() {
        return Err(domain("non-finite gradient"));
    }
    let g = (grad * cfg.scale()).round();
    let limit = quantization_limit(cfg, weights);
    if g.abs() >= limit as f64 {
        return Err(domain(format!(
            "gradient {grad} exceeds the fixed-point range; lower frac_bits"
        )));
    }
    Ok(g as i128)
}

fn round_div(num: i128, den: i128) -> i128 {
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    if 2 * r >= den {
        q + 1
    } else {
        q
    }
}

/// Mask `round((1/w_i) * P_i)` for a row sum `P_i`.
fn mask_term(row_sum: i128, client: usize, weights: &Weights) -> i128 {
    round_div(
        row_sum * weights.denominator as i128,
        weights.numerators[client] as i128,
    )
}

/// Masked value `y_i = g_i + round((1/w_i) sum_k p_ik) mod R`.
pub fn mask_gradient(g: i128, client: usize, weights: &Weights, p_row: &[u64], cfg: &CssConfig) -> Result<u64> {
    if client >= weights.len() {
        return Err(domain(format!("client {client} has no weight")));
    }
    let r = cfg.modulus() as i128;
    let row_sum = p_row.iter().map(|p| *p as i128).sum::<i128>() % r;
    let y = (g + mask_term(row_sum, client, weights)).rem_euclid(r);
    Ok(y as u64)
}

/// Unreduced masked value for the exact path.
pub fn mask_gradient_exact(g: i128, client: usize, weights: &Weights, p_row: &[i128]) -> Result<i128> {
    if client >= weights.len() {
        return Err(domain(format!("client {client} has no weight")));
    }
    Ok(g + mask_term(p_row.iter().sum(), client, weights))
}

/// `sum_i w_i y_i` with the pads cancelled, de-quantized.
pub fn server_aggregate_classical(masked: &[u64], weights: &Weights, cfg: &CssConfig) -> Result<f64> {
    if masked.len() != weights.len() {
        return Err(domain("one masked value per weighted client required"));
    }
    let r = cfg.modulus();
    let total = masked
        .iter()
        .zip(&weights.numerators)
        .fold(0u128, |acc, (y, n)| (acc + (*y as u128 % r) * (*n as u128 % r)) % r);
    let centred = if total >= r / 2 {
        total as i128 - r as i128
    } else {
        total as i128
    };
    Ok(centred as f64 / weights.denominator as f64 / cfg.scale())
}

/// Ledger totals predicted by the cost formulas.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CostPrediction {
    pub qubits: u64,
    pub classical_bits: u64,
}

/// Pairwise pad exchange `m(m-1) d log R` plus uploads `m d log R`.
pub fn cost_classical(cfg: &CssConfig) -> CostPrediction {
    let (m, d, w) = (cfg.m as u64, cfg.d as u64, cfg.modulus_bits as u64);
    CostPrediction {
        qubits: 0,
        classical_bits: m * (m - 1) * d * w + m * d * w,
    }
}

/// Register width for amplitude-encoding `m` values (at least one qubit).
pub fn index_qubits(m: usize) -> usize {
    (m.max(2) - 1).ilog2() as usize + 1
}

/// `d * shots * ceil(log m)` qubits; pads plus one normalization word per
/// parameter classically.
pub fn cost_quantum(cfg: &CssConfig, shots: u64) -> CostPrediction {
    let (m, d, w) = (cfg.m as u64, cfg.d as u64, cfg.modulus_bits as u64);
    CostPrediction {
        qubits: d * shots * index_qubits(cfg.m) as u64,
        classical_bits: m * (m - 1) * d * w + d * w,
    }
}

/// `|phi_c> = sum_i y_i |i> / N_c` over a power-of-two padded register.
pub fn amplitude_encode_masked(y: &[f64]) -> Result<(StateVector, f64)> {
    if y.iter().any(|v| *v < 0.0) {
        return Err(domain("amplitude encoding needs non-negative values"));
    }
    let (state, norm) = StateVector::from_real_unnormalized(y)?;
    Ok((state, norm))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SwapAggregate {
    pub estimate: f64,
    /// Measured `|<phi_s|phi_c>|^2` before clamping.
    pub overlap_sq: f64,
    /// `true` when finite-shot noise gave a negative overlap that was set to 0.
    pub clamped: bool,
    pub std_error: f64,
}

/// Standard error of `K sqrt(F)` when `F` is estimated from `shots` SWAP
/// tests: the delta method, capped by the `F -> 0` behaviour `K shots^(-1/4)`.
pub fn swap_standard_error(overlap_sq: f64, scale: f64, shots: usize) -> f64 {
    let f = overlap_sq.clamp(0.0, 1.0);
    let n = shots as f64;
    let near_zero = scale * n.powf(-0.25);
    if f <= 0.0 {
        return near_zero;
    }
    (scale * ((1.0 - f * f) / n).sqrt() / (2.0 * f.sqrt())).min(near_zero)
}

/// Server-side estimate of `sum_i w_i y_i` from `|phi_c>` and its norm.
pub fn swap_aggregate<R: Rng + ?Sized>(
    phi_c: &StateVector,
    norm_c: f64,
    weights: &[f64],
    shots: usize,
    rng: &mut R,
) -> Result<SwapAggregate> {
    if weights.iter().any(|w| *w < 0.0) {
        return Err(domain("SWAP aggregation needs non-negative weights"));
    }
    let mut padded = weights.to_vec();
    padded.resize(phi_c.dim(), 0.0);
    if padded.len() != phi_c.dim() {
        return Err(domain("more weights than encoded values"));
    }
    let (phi_s, norm_s) = StateVector::from_real_unnormalized(&padded)?;
    let overlap_sq = swap_test(&phi_s, phi_c, shots, rng)?;
    let scale = norm_s * norm_c;
    Ok(SwapAggregate {
        estimate: scale * overlap_sq.max(0.0).sqrt(),
        overlap_sq,
        clamped: overlap_sq < 0.0,
        std_error: swap_standard_error(overlap_sq, scale, shots),
    })
}

/// Public offset `o_i` making every exact-mode masked value non-negative.
pub fn public_offset(client: usize, weights: &Weights, cfg: &CssConfig) -> i128 {
    let d = weights.denominator as i128;
    let n = weights.numerators[client] as i128;
    let m = weights.len() as i128;
    let pad_bound = d * (m - 1) * cfg.modulus() as i128;
    (pad_bound + n - 1) / n + 1 + quantization_limit(cfg, weights)
}

fn check_gradients(grads: &[Vec<f64>], weights: &Weights, cfg: &CssConfig) -> Result<()> {
    cfg.validate()?;
    if grads.len() != cfg.m || weights.len() != cfg.m {
        return Err(domain(format!("expected {} clients", cfg.m)));
    }
    if grads.iter().any(|g| g.len() != cfg.d) {
        return Err(domain(format!("expected {} parameters per client", cfg.d)));
    }
    Ok(())
}

fn charge_pad_exchange(cfg: &CssConfig, channel: &mut Channel, protocol: Protocol) -> Result<()> {
    let bits = cfg.d as u64 * cfg.modulus_bits as u64;
    for i in 0..cfg.m {
        for k in 0..cfg.m {
            if i != k {
                channel.send_classical(PartyId::Client(i), PartyId::Client(k), bits, protocol)?;
            }
        }
    }
    Ok(())
}

/// Classical masked aggregation of `m x d` client gradients.
pub fn run_classical<R: Rng + ?Sized>(
    grads: &[Vec<f64>],
    weights: &Weights,
    cfg: &CssConfig,
    rng: &mut R,
    channel: &mut Channel,
) -> Result<Vec<f64>> {
    check_gradients(grads, weights, cfg)?;
    let pads: Vec<PadMatrix> = (0..cfg.d).map(|_| PadMatrix::sample(cfg.m, cfg, rng)).collect();
    charge_pad_exchange(cfg, channel, Protocol::CssClassical)?;
    let mut masked = vec![vec![0u64; cfg.d]; cfg.m];
    for (j, pad) in pads.iter().enumerate() {
        let p = compute_perturbations(pad, cfg);
        for i in 0..cfg.m {
            let g = quantize(grads[i][j], cfg, weights)?;
            masked[i][j] = mask_gradient(g, i, weights, &p[i], cfg)?;
        }
    }
    let upload = cfg.d as u64 * cfg.modulus_bits as u64;
    for i in 0..cfg.m {
        channel.send_classical(PartyId::Client(i), PartyId::Server, upload, Protocol::CssClassical)?;
    }
    (0..cfg.d)
        .map(|j| {
            let column: Vec<u64> = masked.iter().map(|row| row[j]).collect();
            server_aggregate_classical(&column, weights, cfg)
        })
        .collect()
}

/// Per-parameter output of [`run_quantum`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantumAggregate {
    pub values: Vec<f64>,
    /// SWAP-test standard errors in gradient units.
    pub std_errors: Vec<f64>,
    pub clamped: usize,
}

/// SWAP-test masked aggregation. Client 0 prepares the amplitude-encoded
/// state on behalf of all clients and streams one copy per shot.
pub fn run_quantum<R: Rng + ?Sized>(
    grads: &[Vec<f64>],
    weights: &Weights,
    cfg: &CssConfig,
    shots: usize,
    rng: &mut R,
    channel: &mut Channel,
) -> Result<QuantumAggregate> {
    check_gradients(grads, weights, cfg)?;
    if shots == 0 {
        return Err(domain("SWAP aggregation needs at least one shot"));
    }
    let pads: Vec<PadMatrix> = (0..cfg.d).map(|_| PadMatrix::sample(cfg.m, cfg, rng)).collect();
    charge_pad_exchange(cfg, channel, Protocol::CssQuantum)?;
    let w = weights.as_f64();
    let offsets: Vec<i128> = (0..cfg.m).map(|i| public_offset(i, weights, cfg)).collect();
    let offset_mass: f64 = offsets.iter().zip(&w).map(|(o, wi)| *o as f64 * wi).sum();
    let width = index_qubits(cfg.m);
    let mut out = QuantumAggregate {
        values: Vec::with_capacity(cfg.d),
        std_errors: Vec::with_capacity(cfg.d),
        clamped: 0,
    };
    for (j, pad) in pads.iter().enumerate() {
        let p = compute_perturbations_exact(pad);
        let mut shifted = Vec::with_capacity(cfg.m);
        for i in 0..cfg.m {
            let g = quantize(grads[i][j], cfg, weights)?;
            let y = mask_gradient_exact(g, i, weights, &p[i])?;
            shifted.push((y + offsets[i]) as f64);
        }
        let (phi_c, norm_c) = amplitude_encode_masked(&shifted)?;
        channel.charge_quantum(PartyId::Client(0), PartyId::Server, width, shots as u64, Protocol::CssQuantum)?;
        let agg = swap_aggregate(&phi_c, norm_c, &w, shots, rng)?;
        out.values.push((agg.estimate - offset_mass) / cfg.scale());
        out.std_errors.push(agg.std_error / cfg.scale());
        out.clamped += usize::from(agg.clamped);
    }
    channel.send_classical(
        PartyId::Client(0),
        PartyId::Server,
        cfg.d as u64 * cfg.modulus_bits as u64,
        Protocol::CssQuantum,
    )?;
    Ok(out)
}
