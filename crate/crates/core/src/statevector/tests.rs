use super::*;
use crate::seeded_rng;
use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::Rng;
use rand::seq::index::sample;
use std::f64::consts::PI;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn assert_amps(state: &StateVector, expected: &[Complex64], tol: f64) {
    assert_eq!(state.dim(), expected.len());
    for (i, (a, e)) in state.amplitudes().iter().zip(expected).enumerate() {
        assert!((a - e).norm() <= tol, "amplitude {i}: got {a}, expected {e}");
    }
}

fn random_state(n: usize, seed: u64) -> StateVector {
    let mut rng = seeded_rng(seed);
    let raw: Vec<Complex64> = (0..1 << n)
        .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let norm = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    StateVector::from_amplitudes(raw.into_iter().map(|a| a / norm).collect()).unwrap()
}

/// Independent DFT: out_z = sum_x in_x e^{sign 2 pi i x z / N} / sqrt(N), applied per block.
fn naive_fourier(state: &StateVector, range: QubitRange, sign: f64) -> Vec<Complex64> {
    let n = state.num_qubits();
    let shift = n - range.end();
    let dim = range.dim();
    let mut out = vec![ZERO; state.dim()];
    for (i, a) in state.amplitudes().iter().enumerate() {
        let x = (i >> shift) & (dim - 1);
        let base = i & !((dim - 1) << shift);
        for z in 0..dim {
            let ph = sign * 2.0 * PI * (x * z) as f64 / dim as f64;
            out[base | (z << shift)] += a * Complex64::from_polar(1.0 / (dim as f64).sqrt(), ph);
        }
    }
    out
}

#[test]
fn basis_states() {
    let s = StateVector::basis(1, 0).unwrap();
    assert_eq!(s.amplitudes(), &[ONE, ZERO]);
    let s = StateVector::basis(2, 3).unwrap();
    assert_eq!(s.amplitudes(), &[ZERO, ZERO, ZERO, ONE]);
}

#[test]
fn basis_at_cap_boundary() {
    let s = StateVector::basis(22, 0).unwrap();
    assert_eq!(s.dim(), 4_194_304);
    assert!(matches!(
        StateVector::basis(23, 0),
        Err(Error::Capacity { requested: 23, cap: 22 })
    ));
    assert!(matches!(StateVector::basis(2, 4), Err(Error::Domain(_))));
}

#[test]
fn hadamard_and_phase() {
    let mut s = StateVector::basis(1, 0).unwrap();
    s.apply_gate(Gate::H, 0).unwrap();
    let h = FRAC_1_SQRT_2;
    assert_amps(&s, &[c(h, 0.0), c(h, 0.0)], 1e-15);
    s.apply_gate(Gate::Phase(PI), 0).unwrap();
    assert_amps(&s, &[c(h, 0.0), c(-h, 0.0)], 1e-15);
    assert!(s.apply_gate(Gate::X, 1).is_err());
}

#[test]
fn x_is_an_involution() {
    let original = random_state(3, 1);
    let mut s = original.clone();
    s.apply_gate(Gate::X, 1).unwrap();
    s.apply_gate(Gate::X, 1).unwrap();
    assert_amps(&s, original.amplitudes(), 1e-15);
}

#[test]
fn s_and_sdg_cancel() {
    let original = random_state(2, 2);
    let mut s = original.clone();
    s.apply_gate(Gate::S, 0).unwrap();
    s.apply_gate(Gate::Sdg, 0).unwrap();
    assert_amps(&s, original.amplitudes(), 1e-15);
}

#[test]
fn controlled_gates() {
    let mut s = StateVector::basis(2, 0b10).unwrap();
    s.apply_controlled(Gate::X, &[0], 1).unwrap();
    assert_amps(&s, &[ZERO, ZERO, ZERO, ONE], 0.0);

    let h = FRAC_1_SQRT_2;
    let mut bell = StateVector::from_amplitudes(vec![c(h, 0.0), ZERO, ZERO, c(h, 0.0)]).unwrap();
    bell.apply_controlled(Gate::Z, &[0], 1).unwrap();
    assert_amps(&bell, &[c(h, 0.0), ZERO, ZERO, c(-h, 0.0)], 1e-15);

    let original = random_state(3, 3);
    let mut s = original.clone();
    s.apply_controlled(Gate::X, &[2], 0).unwrap();
    s.apply_controlled(Gate::X, &[2], 0).unwrap();
    assert_amps(&s, original.amplitudes(), 1e-15);

    assert!(s.apply_controlled(Gate::X, &[1], 1).is_err());
    assert!(s.apply_controlled(Gate::X, &[0, 0], 1).is_err());
}

#[test]
fn diagonal_identity_and_global_phase() {
    let original = random_state(3, 4);
    let mut s = original.clone();
    s.apply_diagonal(|_| 0.0, s.full_range()).unwrap();
    assert_amps(&s, original.amplitudes(), 0.0);

    s.apply_diagonal(|_| PI, s.full_range()).unwrap();
    let p0 = original.marginal_probabilities(original.full_range()).unwrap();
    let p1 = s.marginal_probabilities(s.full_range()).unwrap();
    for (a, b) in p0.iter().zip(&p1) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
    }
}

#[test]
fn diagonal_matches_dense_matrix() {
    // Dense-matrix oracle: D = diag(e^{i phi(z)}) multiplied into the vector.
    let marked = [2usize, 5];
    let oracle = |z: usize| if marked.contains(&z) { PI } else { 0.0 };
    let mut s = StateVector::uniform(3).unwrap();
    let before = s.clone();
    s.apply_diagonal(oracle, s.full_range()).unwrap();
    let mut dense = vec![vec![ZERO; 8]; 8];
    for z in 0..8 {
        dense[z][z] = Complex64::from_polar(1.0, oracle(z));
    }
    let expected: Vec<Complex64> = (0..8)
        .map(|r| (0..8).map(|k| dense[r][k] * before.amplitude(k)).sum())
        .collect();
    assert_amps(&s, &expected, 1e-15);
    for z in 0..8 {
        let sign = if marked.contains(&z) { -1.0 } else { 1.0 };
        assert_abs_diff_eq!(s.amplitude(z).re, sign / 8f64.sqrt(), epsilon = 1e-15);
    }
}

#[test]
fn diagonal_on_subrange_reads_msb_first() {
    let mut s = StateVector::uniform(3).unwrap();
    // Phase pi whenever qubits 1..3 read "01".
    s.apply_diagonal(|z| if z == 1 { PI } else { 0.0 }, QubitRange::new(1, 2)).unwrap();
    for i in 0..8 {
        let expected = if i & 0b11 == 0b01 { -1.0 } else { 1.0 };
        assert_abs_diff_eq!(s.amplitude(i).re, expected / 8f64.sqrt(), epsilon = 1e-15);
    }
    assert!(s.apply_diagonal(|_| f64::NAN, s.full_range()).is_err());
}

#[test]
fn qft_of_zero_is_uniform() {
    for h in 1..=5 {
        let mut s = StateVector::basis(h, 0).unwrap();
        s.qft(s.full_range()).unwrap();
        let a = 1.0 / ((1 << h) as f64).sqrt();
        for amp in s.amplitudes() {
            assert_abs_diff_eq!(amp.re, a, epsilon = 1e-12);
            assert_abs_diff_eq!(amp.im, 0.0, epsilon = 1e-12);
        }
    }
}

#[test]
fn qft_of_one_on_three_qubits() {
    let mut s = StateVector::basis(3, 1).unwrap();
    s.qft(s.full_range()).unwrap();
    let expected: Vec<Complex64> = (0..8)
        .map(|z| Complex64::from_polar(1.0 / 8f64.sqrt(), 2.0 * PI * z as f64 / 8.0))
        .collect();
    assert_amps(&s, &expected, 1e-12);
}

#[test]
fn qft_matches_naive_dft_on_subrange() {
    let s = random_state(5, 9);
    for range in [QubitRange::new(0, 5), QubitRange::new(1, 3), QubitRange::new(3, 2)] {
        let mut fwd = s.clone();
        fwd.qft(range).unwrap();
        assert_amps(&fwd, &naive_fourier(&s, range, 1.0), 1e-12);
        let mut inv = s.clone();
        inv.iqft(range).unwrap();
        assert_amps(&inv, &naive_fourier(&s, range, -1.0), 1e-12);
    }
}

#[test]
fn iqft_inverts_qft_exhaustively() {
    for h in 1..=5 {
        for x in 0..(1usize << h) {
            let mut s = StateVector::basis(h, x).unwrap();
            s.qft(s.full_range()).unwrap();
            s.iqft(s.full_range()).unwrap();
            assert!((s.amplitude(x) - ONE).norm() < 1e-10, "h={h} x={x}");
            assert!(s.is_normalized());
        }
    }
}

#[test]
fn measure_basis_and_bell() {
    let mut rng = seeded_rng(5);
    let mut one = StateVector::basis(1, 1).unwrap();
    for _ in 0..20 {
        assert_eq!(one.measure(QubitRange::new(0, 1), &mut rng).unwrap(), 1);
    }
    let h = FRAC_1_SQRT_2;
    let bell = StateVector::from_amplitudes(vec![c(h, 0.0), ZERO, ZERO, c(h, 0.0)]).unwrap();
    for _ in 0..50 {
        let mut s = bell.clone();
        let out = s.measure(QubitRange::new(0, 1), &mut rng).unwrap();
        let expected = if out == 0 { 0 } else { 3 };
        assert_abs_diff_eq!(s.amplitude(expected).norm(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn measure_frequency_of_plus_state() {
    let mut rng = seeded_rng(6);
    let mut plus = StateVector::basis(1, 0).unwrap();
    plus.apply_gate(Gate::H, 0).unwrap();
    let zeros = (0..10_000)
        .filter(|_| plus.clone().measure(QubitRange::new(0, 1), &mut rng).unwrap() == 0)
        .count();
    assert!((zeros as f64 / 1e4 - 0.5).abs() <= 0.02);
}

#[test]
fn sample_counts_behaviour() {
    let mut rng = seeded_rng(7);
    let s = StateVector::uniform(2).unwrap();
    let counts = s.sample_counts(s.full_range(), 40_000, &mut rng).unwrap();
    assert_eq!(counts.values().sum::<usize>(), 40_000);
    for v in 0..4 {
        assert!((counts[&v] as f64 / 4e4 - 0.25).abs() <= 0.01);
    }
    let basis = StateVector::basis(3, 6).unwrap();
    let counts = basis.sample_counts(basis.full_range(), 123, &mut rng).unwrap();
    assert_eq!(counts.len(), 1);
    assert_eq!(counts[&6], 123);
    let counts = basis.sample_counts(basis.full_range(), 1, &mut rng).unwrap();
    assert_eq!(counts.values().sum::<usize>(), 1);
    assert!(basis.sample_counts(basis.full_range(), 0, &mut rng).is_err());
}

#[test]
fn measurement_statistics_within_four_sigma() {
    let mut rng = seeded_rng(8);
    let s = random_state(3, 10);
    let probs = s.marginal_probabilities(s.full_range()).unwrap();
    let shots = 10_000;
    let counts = s.sample_counts(s.full_range(), shots, &mut rng).unwrap();
    for (v, p) in probs.iter().enumerate() {
        let f = counts.get(&v).copied().unwrap_or(0) as f64 / shots as f64;
        let sigma = (p * (1.0 - p) / shots as f64).sqrt();
        assert!((f - p).abs() <= 4.0 * sigma + 1e-12, "outcome {v}: {f} vs {p}");
    }
}

#[test]
fn swap_test_cases() {
    let mut rng = seeded_rng(11);
    let psi = random_state(2, 12);
    assert_abs_diff_eq!(swap_test(&psi, &psi, 2_000, &mut rng).unwrap(), 1.0, epsilon = 1e-12);

    let a = StateVector::basis(2, 1).unwrap();
    let b = StateVector::basis(2, 2).unwrap();
    let est = swap_test(&a, &b, 10_000, &mut rng).unwrap();
    assert!(est.abs() < 0.05);

    let zero = StateVector::basis(1, 0).unwrap();
    let mut plus = zero.clone();
    plus.apply_gate(Gate::H, 0).unwrap();
    let est = swap_test(&plus, &zero, 10_000, &mut rng).unwrap();
    assert!((est - 0.5).abs() <= 0.03, "{est}");

    assert!(swap_test(&psi, &zero, 10, &mut rng).is_err());
}

#[test]
fn grover_diffusion_cases() {
    let mut s = StateVector::uniform(3).unwrap();
    s.grover_diffusion(s.full_range()).unwrap();
    assert_amps(&s, StateVector::uniform(3).unwrap().amplitudes(), 1e-15);

    // M = 1 of N = 4: sin(3 theta) = 1 with sin(theta) = 1/2, one iteration finds it.
    let mut s = StateVector::uniform(2).unwrap();
    s.apply_diagonal(|z| if z == 2 { PI } else { 0.0 }, s.full_range()).unwrap();
    s.grover_diffusion(s.full_range()).unwrap();
    assert_abs_diff_eq!(s.amplitude(2).norm(), 1.0, epsilon = 1e-12);

    let original = random_state(3, 13);
    let mut s = original.clone();
    s.grover_diffusion(QubitRange::new(1, 2)).unwrap();
    s.grover_diffusion(QubitRange::new(1, 2)).unwrap();
    assert_amps(&s, original.amplitudes(), 1e-14);
}

#[test]
fn quantum_count_extremes() {
    let mut rng = seeded_rng(14);
    let none = quantum_count(|_| 0.0, 3, 5, &mut rng).unwrap();
    assert_abs_diff_eq!(none.estimate, 0.0, epsilon = 1e-12);
    assert_eq!(none.oracle_calls, 31);
    let all = quantum_count(|_| PI, 3, 5, &mut rng).unwrap();
    assert_abs_diff_eq!(all.estimate, 8.0, epsilon = 1e-9);
}

#[test]
fn quantum_count_within_bound_against_enumeration() {
    let mut hits = 0;
    let trials = 50;
    for seed in 0..trials {
        let mut rng = seeded_rng(100 + seed);
        let marked: Vec<usize> = sample(&mut rng, 16, 5).into_vec();
        let oracle = |z: usize| if marked.contains(&z) { PI } else { 0.0 };
        // Brute-force enumeration of the oracle.
        let truth = (0..16).filter(|&z| oracle(z) != 0.0).count();
        assert_eq!(truth, 5);
        let est = quantum_count(oracle, 4, 7, &mut rng).unwrap();
        if (est.estimate - truth as f64).abs() <= counting_error_bound(truth as f64, 16, 7) {
            hits += 1;
        }
    }
    assert!(hits as f64 >= 0.8 * trials as f64, "{hits}/{trials}");
}

#[test]
fn extract_register_rejects_entanglement() {
    let h = FRAC_1_SQRT_2;
    let bell = StateVector::from_amplitudes(vec![c(h, 0.0), ZERO, ZERO, c(h, 0.0)]).unwrap();
    assert!(bell.extract_register(QubitRange::new(0, 1)).is_err());
    let mut s = StateVector::basis(3, 0).unwrap();
    s.apply_gate(Gate::H, 0).unwrap();
    let r = s.extract_register(QubitRange::new(0, 1)).unwrap();
    assert_abs_diff_eq!(r.amplitude(1).re, h, epsilon = 1e-15);
}

#[test]
fn format_bits_msb_first() {
    assert_eq!(format_bits(6, 4), "0110");
    assert_eq!(format_bits(1, 1), "1");
}

#[derive(Clone, Debug)]
enum Op {
    Gate(u8, usize, f64),
    Controlled(u8, usize, usize),
    Diagonal(u64),
    Qft(usize, usize),
    Iqft(usize, usize),
    Diffusion(usize, usize),
}

fn gate_of(code: u8, theta: f64) -> Gate {
    match code % 6 {
        0 => Gate::H,
        1 => Gate::X,
        2 => Gate::Z,
        3 => Gate::S,
        4 => Gate::Sdg,
        _ => Gate::Phase(theta),
    }
}

fn apply_op(s: &mut StateVector, op: &Op) {
    let n = s.num_qubits();
    match *op {
        Op::Gate(g, q, th) => s.apply_gate(gate_of(g, th), q % n).unwrap(),
        Op::Controlled(g, c, t) => {
            let (c, t) = (c % n, t % n);
            if c != t {
                s.apply_controlled(gate_of(g, 0.7), &[c], t).unwrap();
            }
        }
        Op::Diagonal(seed) => {
            s.apply_diagonal(|z| ((z as u64 ^ seed) % 13) as f64 * 0.37, s.full_range()).unwrap()
        }
        Op::Qft(a, l) | Op::Iqft(a, l) | Op::Diffusion(a, l) => {
            let start = a % n;
            let len = 1 + l % (n - start);
            let r = QubitRange::new(start, len);
            match op {
                Op::Qft(..) => s.qft(r).unwrap(),
                Op::Iqft(..) => s.iqft(r).unwrap(),
                _ => s.grover_diffusion(r).unwrap(),
            }
        }
    }
}

fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![
        (any::<u8>(), 0usize..8, -3.0f64..3.0).prop_map(|(g, q, t)| Op::Gate(g, q, t)),
        (any::<u8>(), 0usize..8, 0usize..8).prop_map(|(g, c, t)| Op::Controlled(g, c, t)),
        any::<u64>().prop_map(Op::Diagonal),
        (0usize..8, 0usize..8).prop_map(|(a, l)| Op::Qft(a, l)),
        (0usize..8, 0usize..8).prop_map(|(a, l)| Op::Iqft(a, l)),
        (0usize..8, 0usize..8).prop_map(|(a, l)| Op::Diffusion(a, l)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_and_inner_products_preserved(
        n in 1usize..=5,
        seeds in (any::<u64>(), any::<u64>()),
        ops in proptest::collection::vec(op_strategy(), 1..12),
    ) {
        let mut a = random_state(n, seeds.0);
        let mut b = random_state(n, seeds.1);
        let before = a.inner(&b).unwrap();
        for op in &ops {
            apply_op(&mut a, op);
            apply_op(&mut b, op);
            prop_assert!((a.norm_sqr() - 1.0).abs() <= 1e-10);
        }
        let after = a.inner(&b).unwrap();
        prop_assert!((before - after).norm() <= 1e-9);
    }
}
