//! Fixtures shared by the criterion benchmarks.

use num_complex::Complex64;
use qfl_core::{seeded_rng, SimRng, StateVector};
use rand::Rng;

pub fn rng(seed: u64) -> SimRng {
    seeded_rng(seed)
}

/// Normalized state with uniformly random amplitudes on `n` qubits.
pub fn random_state(n: usize, seed: u64) -> StateVector {
    let mut rng = seeded_rng(seed);
    let amps: Vec<Complex64> = (0..1usize << n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    StateVector::from_amplitudes(amps.into_iter().map(|a| a / norm).collect()).expect("normalized")
}

/// `m` rows of `l0` random bits.
pub fn random_bits(m: usize, l0: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = seeded_rng(seed);
    (0..m).map(|_| (0..l0).map(|_| rng.random_range(0..2)).collect()).collect()
}

/// `m x d` gradients in `[-1, 1)`.
pub fn random_gradients(m: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded_rng(seed);
    (0..m).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}
