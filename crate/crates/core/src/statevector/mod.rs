//! Dense statevector simulator.
//!
//! Qubit 0 is the most significant bit of a basis-state label, so on a
//! three-qubit register `|q0 q1 q2>` has index `4*q0 + 2*q1 + q2`. A
//! [`QubitRange`] addresses a contiguous sub-register whose value is read
//! with its first qubit as the most significant bit.

mod algorithms;

pub use algorithms::{
    counting_error_bound, estimate_iterate_phase, quantum_count, swap_test, CountEstimate,
};

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{domain, Error, Result};

/// Largest register the simulator will allocate (2^22 amplitudes, 64 MiB).
pub const DEFAULT_QUBIT_CAP: usize = 22;

/// Tolerance on `sum |amp|^2 = 1`.
pub const NORM_TOLERANCE: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Contiguous run of qubits `start .. start + len`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QubitRange {
    pub start: usize,
    pub len: usize,
}

impl QubitRange {
    pub const fn new(start: usize, len: usize) -> Self {
        Self { start, len }
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn contains(&self, qubit: usize) -> bool {
        qubit >= self.start && qubit < self.end()
    }

    pub fn dim(&self) -> usize {
        1 << self.len
    }
}

/// Single-qubit gates used by the protocols.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    H,
    X,
    Z,
    S,
    Sdg,
    /// `diag(1, e^{i theta})`.
    Phase(f64),
}

impl Gate {
    pub fn matrix(self) -> [[Complex64; 2]; 2] {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        match self {
            Gate::H => [[h, h], [h, -h]],
            Gate::X => [[ZERO, ONE], [ONE, ZERO]],
            Gate::Z => [[ONE, ZERO], [ZERO, -ONE]],
            Gate::S => [[ONE, ZERO], [ZERO, Complex64::i()]],
            Gate::Sdg => [[ONE, ZERO], [ZERO, -Complex64::i()]],
            Gate::Phase(theta) => [[ONE, ZERO], [ZERO, Complex64::from_polar(1.0, theta)]],
        }
    }

    fn diagonal(self) -> Option<(Complex64, Complex64)> {
        match self {
            Gate::Z => Some((ONE, -ONE)),
            Gate::S => Some((ONE, Complex64::i())),
            Gate::Sdg => Some((ONE, -Complex64::i())),
            Gate::Phase(theta) => Some((ONE, Complex64::from_polar(1.0, theta))),
            Gate::H | Gate::X => None,
        }
    }
}

/// Complex amplitude vector over `num_qubits` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

fn check_capacity(num_qubits: usize, cap: usize) -> Result<()> {
    if num_qubits > cap {
        return Err(Error::Capacity {
            requested: num_qubits,
            cap,
        });
    }
    Ok(())
}

impl StateVector {
    /// `|basis_index>` on `num_qubits` qubits, checked against [`DEFAULT_QUBIT_CAP`].
    pub fn basis(num_qubits: usize, basis_index: usize) -> Result<Self> {
        Self::basis_with_cap(num_qubits, basis_index, DEFAULT_QUBIT_CAP)
    }

    pub fn basis_with_cap(num_qubits: usize, basis_index: usize, cap: usize) -> Result<Self> {
        if num_qubits == 0 {
            return Err(domain("a register needs at least one qubit"));
        }
        check_capacity(num_qubits, cap)?;
        let dim = 1usize << num_qubits;
        if basis_index >= dim {
            return Err(domain(format!(
                "basis index {basis_index} out of range for {num_qubits} qubits"
            )));
        }
        let mut amps = vec![ZERO; dim];
        amps[basis_index] = ONE;
        Ok(Self { num_qubits, amps })
    }

    /// Uniform superposition over all basis states.
    pub fn uniform(num_qubits: usize) -> Result<Self> {
        let mut state = Self::basis(num_qubits, 0)?;
        let a = Complex64::new((1.0 / state.dim() as f64).sqrt(), 0.0);
        state.amps.iter_mut().for_each(|x| *x = a);
        Ok(state)
    }

    /// Wrap raw amplitudes. The vector must have power-of-two length and unit norm.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let dim = amps.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(domain(format!("amplitude vector length {dim} is not a power of two")));
        }
        let num_qubits = dim.trailing_zeros() as usize;
        check_capacity(num_qubits, DEFAULT_QUBIT_CAP)?;
        let state = Self { num_qubits, amps };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(domain(format!("amplitudes have squared norm {norm}, expected 1")));
        }
        Ok(state)
    }

    /// Normalise an arbitrary non-zero real vector into amplitudes, padding with
    /// zeros up to the next power of two (minimum one qubit). Returns the norm.
    pub fn from_real_unnormalized(values: &[f64]) -> Result<(Self, f64)> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(domain("non-finite value in amplitude encoding"));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(domain("cannot amplitude-encode the zero vector"));
        }
        let dim = values.len().next_power_of_two().max(2);
        let mut amps = vec![ZERO; dim];
        for (a, v) in amps.iter_mut().zip(values) {
            *a = Complex64::new(v / norm, 0.0);
        }
        let num_qubits = dim.trailing_zeros() as usize;
        check_capacity(num_qubits, DEFAULT_QUBIT_CAP)?;
        Ok((Self { num_qubits, amps }, norm))
    }

    /// Tensor product `self ⊗ other`; `self` occupies the leading qubits.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let n = self.num_qubits + other.num_qubits;
        check_capacity(n, DEFAULT_QUBIT_CAP)?;
        let mut amps = Vec::with_capacity(1 << n);
        for a in &self.amps {
            amps.extend(other.amps.iter().map(|b| a * b));
        }
        Ok(StateVector { num_qubits: n, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amps[index]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOLERANCE
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.num_qubits != other.num_qubits {
            return Err(domain("inner product of registers with different widths"));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Whole register as a range.
    pub fn full_range(&self) -> QubitRange {
        QubitRange::new(0, self.num_qubits)
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.num_qubits - 1 - qubit)
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(domain(format!(
                "qubit {qubit} out of range for a {}-qubit register",
                self.num_qubits
            )));
        }
        Ok(())
    }

    pub(crate) fn check_range(&self, range: QubitRange) -> Result<()> {
        if range.len == 0 || range.end() > self.num_qubits {
            return Err(domain(format!(
                "qubit range {}..{} invalid for a {}-qubit register",
                range.start,
                range.end(),
                self.num_qubits
            )));
        }
        Ok(())
    }

    /// Value of the sub-register `range` inside basis label `index`.
    pub fn subvalue(&self, index: usize, range: QubitRange) -> usize {
        let shift = self.num_qubits - range.end();
        (index >> shift) & ((1 << range.len) - 1)
    }

    pub fn bit(&self, index: usize, qubit: usize) -> bool {
        index & self.mask(qubit) != 0
    }

    pub fn apply_gate(&mut self, gate: Gate, target: usize) -> Result<()> {
        self.apply_controlled(gate, &[], target)
    }

    /// Apply `gate` to `target` on the subspace where every control is `|1>`.
    pub fn apply_controlled(&mut self, gate: Gate, controls: &[usize], target: usize) -> Result<()> {
        self.check_qubit(target)?;
        let mut control_mask = 0usize;
        for &c in controls {
            self.check_qubit(c)?;
            let m = self.mask(c);
            if c == target || control_mask & m != 0 {
                return Err(domain(format!(
                    "control qubit {c} overlaps the target or another control"
                )));
            }
            control_mask |= m;
        }
        let t = self.mask(target);
        if let Some((d0, d1)) = gate.diagonal() {
            for (i, a) in self.amps.iter_mut().enumerate() {
                if i & control_mask == control_mask {
                    *a *= if i & t == 0 { d0 } else { d1 };
                }
            }
            return Ok(());
        }
        let [[m00, m01], [m10, m11]] = gate.matrix();
        for i0 in 0..self.amps.len() {
            if i0 & t != 0 || i0 & control_mask != control_mask {
                continue;
            }
            let i1 = i0 | t;
            let (a0, a1) = (self.amps[i0], self.amps[i1]);
            self.amps[i0] = m00 * a0 + m01 * a1;
            self.amps[i1] = m10 * a0 + m11 * a1;
        }
        Ok(())
    }

    /// Multiply every amplitude by `e^{i oracle(z)}` where `z` is the value of
    /// the sub-register `range`.
    pub fn apply_diagonal<F>(&mut self, oracle: F, range: QubitRange) -> Result<()>
    where
        F: Fn(usize) -> f64,
    {
        self.check_range(range)?;
        let mut phases = Vec::with_capacity(range.dim());
        for z in 0..range.dim() {
            let angle = oracle(z);
            if !angle.is_finite() {
                return Err(domain(format!("oracle returned non-finite phase for {z}")));
            }
            phases.push(if angle == 0.0 {
                ONE
            } else {
                Complex64::from_polar(1.0, angle)
            });
        }
        let shift = self.num_qubits - range.end();
        let mask = range.dim() - 1;
        for (i, a) in self.amps.iter_mut().enumerate() {
            let p = phases[(i >> shift) & mask];
            if p != ONE {
                *a *= p;
            }
        }
        Ok(())
    }

    /// Run `f` on the `2^len` amplitudes of `range` for every assignment of the
    /// remaining qubits on which all `controls` are `|1>`. The slice handed to
    /// `f` is indexed by sub-register value. `f` must act unitarily.
    pub fn apply_subregister<F>(&mut self, controls: &[usize], range: QubitRange, mut f: F) -> Result<()>
    where
        F: FnMut(&mut [Complex64]),
    {
        self.check_range(range)?;
        let mut control_mask = 0usize;
        for &c in controls {
            self.check_qubit(c)?;
            if range.contains(c) {
                return Err(domain(format!("control qubit {c} lies inside the target range")));
            }
            control_mask |= self.mask(c);
        }
        let shift = self.num_qubits - range.end();
        let lo_count = 1usize << shift;
        let hi_count = 1usize << range.start;
        let dim = range.dim();
        let mut buf = vec![ZERO; dim];
        for hi in 0..hi_count {
            for lo in 0..lo_count {
                let base = (hi << (self.num_qubits - range.start)) | lo;
                if base & control_mask != control_mask {
                    continue;
                }
                for (v, slot) in buf.iter_mut().enumerate() {
                    *slot = self.amps[base | (v << shift)];
                }
                f(&mut buf);
                for (v, slot) in buf.iter().enumerate() {
                    self.amps[base | (v << shift)] = *slot;
                }
            }
        }
        Ok(())
    }

    /// Apply `2|s><s| - I` on `range`, with `|s>` the uniform superposition.
    pub fn grover_diffusion(&mut self, range: QubitRange) -> Result<()> {
        self.apply_subregister(&[], range, reflect_about_uniform)
    }

    /// Quantum Fourier transform on `range`:
    /// `|x> -> 2^{-len/2} sum_z e^{2 pi i x z / 2^len} |z>`.
    pub fn qft(&mut self, range: QubitRange) -> Result<()> {
        self.fourier(range, rustfft::FftDirection::Inverse)
    }

    /// Inverse of [`StateVector::qft`].
    pub fn iqft(&mut self, range: QubitRange) -> Result<()> {
        self.fourier(range, rustfft::FftDirection::Forward)
    }

    fn fourier(&mut self, range: QubitRange, direction: rustfft::FftDirection) -> Result<()> {
        self.check_range(range)?;
        let dim = range.dim();
        let fft = rustfft::FftPlanner::<f64>::new().plan_fft(dim, direction);
        let scale = 1.0 / (dim as f64).sqrt();
        let mut scratch = vec![ZERO; fft.get_inplace_scratch_len()];
        self.apply_subregister(&[], range, |buf| {
            fft.process_with_scratch(buf, &mut scratch);
            buf.iter_mut().for_each(|a| *a *= scale);
        })
    }

    /// Born-rule distribution of the value of `range`.
    pub fn marginal_probabilities(&self, range: QubitRange) -> Result<Vec<f64>> {
        self.check_range(range)?;
        let shift = self.num_qubits - range.end();
        let mask = range.dim() - 1;
        let mut probs = vec![0.0; range.dim()];
        for (i, a) in self.amps.iter().enumerate() {
            probs[(i >> shift) & mask] += a.norm_sqr();
        }
        Ok(probs)
    }

    /// Projective computational-basis measurement of `range`. The state is
    /// collapsed onto the outcome and renormalised in place.
    pub fn measure<R: Rng + ?Sized>(&mut self, range: QubitRange, rng: &mut R) -> Result<usize> {
        let probs = self.marginal_probabilities(range)?;
        let total: f64 = probs.iter().sum();
        if total <= f64::MIN_POSITIVE {
            return Err(Error::Internal("measured register has zero norm".into()));
        }
        let mut draw = rng.random::<f64>() * total;
        let mut outcome = probs.len() - 1;
        for (v, p) in probs.iter().enumerate() {
            if draw < *p {
                outcome = v;
                break;
            }
            draw -= p;
        }
        // Guard against landing on a zero-probability tail through rounding.
        if probs[outcome] == 0.0 {
            outcome = probs
                .iter()
                .rposition(|p| *p > 0.0)
                .ok_or_else(|| Error::Internal("empty marginal".into()))?;
        }
        self.collapse(range, outcome, probs[outcome])?;
        Ok(outcome)
    }

    /// Project `range` onto `value` and renormalise; `prob` is its Born weight.
    fn collapse(&mut self, range: QubitRange, value: usize, prob: f64) -> Result<()> {
        if prob <= 0.0 {
            return Err(Error::Internal(format!("collapse onto zero-probability outcome {value}")));
        }
        let shift = self.num_qubits - range.end();
        let mask = range.dim() - 1;
        let scale = 1.0 / prob.sqrt();
        for (i, a) in self.amps.iter_mut().enumerate() {
            if (i >> shift) & mask == value {
                *a *= scale;
            } else {
                *a = ZERO;
            }
        }
        Ok(())
    }

    /// Sample `shots` outcomes of `range` without disturbing the state; this
    /// models re-preparing the same state before every shot.
    pub fn sample_counts<R: Rng + ?Sized>(
        &self,
        range: QubitRange,
        shots: usize,
        rng: &mut R,
    ) -> Result<BTreeMap<usize, usize>> {
        if shots == 0 {
            return Err(domain("at least one shot is required"));
        }
        let probs = self.marginal_probabilities(range)?;
        let dist = WeightedIndex::new(&probs)
            .map_err(|e| Error::Internal(format!("invalid marginal distribution: {e}")))?;
        let mut counts = BTreeMap::new();
        for _ in 0..shots {
            *counts.entry(dist.sample(rng)).or_insert(0) += 1;
        }
        Ok(counts)
    }

    /// Reduce onto `range` when every other qubit is known to be `|0>`.
    /// Fails if any amplitude outside that subspace is non-negligible.
    pub fn extract_register(&self, range: QubitRange) -> Result<StateVector> {
        self.check_range(range)?;
        let shift = self.num_qubits - range.end();
        let mut amps = vec![ZERO; range.dim()];
        let mut stray = 0.0;
        for (i, a) in self.amps.iter().enumerate() {
            let v = (i >> shift) & (range.dim() - 1);
            if i == v << shift {
                amps[v] = *a;
            } else {
                stray += a.norm_sqr();
            }
        }
        if stray > NORM_TOLERANCE {
            return Err(Error::Internal(format!(
                "register is entangled with qubits outside {}..{} (stray weight {stray:e})",
                range.start,
                range.end()
            )));
        }
        StateVector::from_amplitudes(amps)
    }
}

/// `v -> 2 mean(v) - v`, the reflection about the uniform vector.
pub(crate) fn reflect_about_uniform(buf: &mut [Complex64]) {
    let mean = buf.iter().sum::<Complex64>() / buf.len() as f64;
    let twice = mean * 2.0;
    buf.iter_mut().for_each(|a| *a = twice - *a);
}

/// Render `value` as a `width`-character bitstring, most significant bit first.
pub fn format_bits(value: usize, width: usize) -> String {
    (0..width)
        .map(|k| if value >> (width - 1 - k) & 1 == 1 { '1' } else { '0' })
        .collect()
}

#[cfg(test)]
mod tests;
