use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use super::{reflect_about_uniform, Gate, QubitRange, StateVector, DEFAULT_QUBIT_CAP};
use crate::error::{domain, Error, Result};

/// SWAP-test estimate of `|<psi|phi>|^2`: `1 - 2 * P(ancilla = 1)` over `shots`
/// repeated preparations.
pub fn swap_test<R: Rng + ?Sized>(
    psi: &StateVector,
    phi: &StateVector,
    shots: usize,
    rng: &mut R,
) -> Result<f64> {
    if psi.num_qubits() != phi.num_qubits() {
        return Err(domain(format!(
            "SWAP test between {}- and {}-qubit registers",
            psi.num_qubits(),
            phi.num_qubits()
        )));
    }
    if shots == 0 {
        return Err(domain("SWAP test needs at least one shot"));
    }
    let n = psi.num_qubits();
    let total = 2 * n + 1;
    if total > DEFAULT_QUBIT_CAP {
        return Err(Error::Capacity {
            requested: total,
            cap: DEFAULT_QUBIT_CAP,
        });
    }
    let mut state = StateVector::basis(1, 0)?.tensor(&psi.tensor(phi)?)?;
    state.apply_gate(Gate::H, 0)?;
    // Controlled swap of the two data registers.
    let half = 1usize << (2 * n);
    let width = 1usize << n;
    let amps = state.amplitudes_mut();
    for i in 0..width {
        for j in (i + 1)..width {
            amps.swap(half + (i << n) + j, half + (j << n) + i);
        }
    }
    state.apply_gate(Gate::H, 0)?;
    let counts = state.sample_counts(QubitRange::new(0, 1), shots, rng)?;
    let ones = counts.get(&1).copied().unwrap_or(0);
    Ok(1.0 - 2.0 * ones as f64 / shots as f64)
}

/// Phase estimation of a unitary `iterate` acting on `work`.
///
/// A `t`-qubit counting register is prepared in `|+>^t` ahead of `work`;
/// counting qubit `j` controls `iterate^(2^(t-1-j))`, then the counting
/// register is inverse-Fourier transformed and measured. Returns the
/// measured value `y` (phase ≈ `2 pi y / 2^t`) and the number of controlled
/// `iterate` applications, `2^t - 1`.
///
/// The counting and work registers share one statevector even when, in the
/// protocol being simulated, the work register travels between parties.
pub fn estimate_iterate_phase<F, R>(
    work: &StateVector,
    counting_qubits: usize,
    mut iterate: F,
    rng: &mut R,
) -> Result<(usize, u64)>
where
    F: FnMut(&mut [Complex64]),
    R: Rng + ?Sized,
{
    if counting_qubits == 0 {
        return Err(domain("phase estimation needs at least one counting qubit"));
    }
    let t = counting_qubits;
    let total = t + work.num_qubits();
    if total > DEFAULT_QUBIT_CAP {
        return Err(Error::Capacity {
            requested: total,
            cap: DEFAULT_QUBIT_CAP,
        });
    }
    let counting = StateVector::uniform(t)?;
    let mut state = counting.tensor(work)?;
    let work_range = QubitRange::new(t, work.num_qubits());
    let mut calls = 0u64;
    for j in 0..t {
        let power = 1u64 << (t - 1 - j);
        state.apply_subregister(&[j], work_range, |buf| {
            for _ in 0..power {
                iterate(buf);
            }
        })?;
        calls += power;
    }
    let counting_range = QubitRange::new(0, t);
    state.iqft(counting_range)?;
    let y = state.measure(counting_range, rng)?;
    Ok((y, calls))
}

/// Result of a quantum counting run.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct CountEstimate {
    /// Estimated number of marked states.
    pub estimate: f64,
    /// Raw counting-register outcome.
    pub measured: usize,
    /// Controlled oracle invocations, `2^t - 1`.
    pub oracle_calls: u64,
    pub counting_qubits: usize,
    /// Size of the searched space, `N = 2^n`.
    pub num_states: usize,
}

impl CountEstimate {
    pub(crate) fn from_measurement(measured: usize, counting_qubits: usize, num_states: usize, oracle_calls: u64) -> Self {
        let s = (PI * measured as f64 / (1u64 << counting_qubits) as f64).sin();
        Self {
            estimate: num_states as f64 * s * s,
            measured,
            oracle_calls,
            counting_qubits,
            num_states,
        }
    }
}

/// Count the basis states of an `index_qubits` register marked by a phase
/// oracle with values in `{0, pi}`, using `counting_qubits` of precision.
pub fn quantum_count<F, R>(
    oracle: F,
    index_qubits: usize,
    counting_qubits: usize,
    rng: &mut R,
) -> Result<CountEstimate>
where
    F: Fn(usize) -> f64,
    R: Rng + ?Sized,
{
    if index_qubits == 0 {
        return Err(domain("quantum counting needs at least one index qubit"));
    }
    if index_qubits + counting_qubits > DEFAULT_QUBIT_CAP {
        return Err(Error::Capacity {
            requested: index_qubits + counting_qubits,
            cap: DEFAULT_QUBIT_CAP,
        });
    }
    let num_states = 1usize << index_qubits;
    let mut phases = Vec::with_capacity(num_states);
    for z in 0..num_states {
        let angle = oracle(z);
        if !angle.is_finite() {
            return Err(domain(format!("oracle returned non-finite phase for {z}")));
        }
        phases.push(Complex64::from_polar(1.0, angle));
    }
    let work = StateVector::uniform(index_qubits)?;
    let grover = |buf: &mut [Complex64]| {
        buf.iter_mut().zip(&phases).for_each(|(a, p)| *a *= p);
        reflect_about_uniform(buf);
    };
    let (y, calls) = estimate_iterate_phase(&work, counting_qubits, grover, rng)?;
    Ok(CountEstimate::from_measurement(y, counting_qubits, num_states, calls))
}

/// Error bound `2 pi sqrt(M N) / 2^t + pi^2 N / 2^{2t}` that a counting
/// estimate satisfies with probability at least `8 / pi^2`.
pub fn counting_error_bound(marked: f64, num_states: usize, counting_qubits: usize) -> f64 {
    let n = num_states as f64;
    let p = (1u64 << counting_qubits) as f64;
    2.0 * PI * (marked * n).sqrt() / p + PI * PI * n / (p * p)
}
