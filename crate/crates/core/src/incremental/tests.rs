use super::ghz::{measure_client, p_zero};
use super::sms::released_state;
use super::*;
use crate::channel::Channel;
use crate::error::Error;
use crate::seeded_rng;
use crate::statevector::{QubitRange, StateVector};
use approx::assert_abs_diff_eq;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

fn ghz_cfg(m: usize, shots: usize) -> GhzConfig {
    GhzConfig {
        m,
        shots_per_quadrature: shots,
        distributor: Distributor::Server,
    }
}

#[test]
fn ghz_shapes() {
    let bell = ghz_prepare(1).unwrap();
    assert_abs_diff_eq!(bell.amplitude(0).re, FRAC_1_SQRT_2, epsilon = 1e-15);
    assert_abs_diff_eq!(bell.amplitude(3).re, FRAC_1_SQRT_2, epsilon = 1e-15);
    let g = ghz_prepare(3).unwrap();
    for i in 0..16 {
        let expect = if i == 0 || i == 15 { FRAC_1_SQRT_2 } else { 0.0 };
        assert_abs_diff_eq!(g.amplitude(i).re, expect, epsilon = 1e-15);
    }
    for q in 0..4 {
        let p = g.marginal_probabilities(QubitRange::new(q, 1)).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
    }
    assert!(ghz_prepare(0).is_err());
    assert!(matches!(ghz_prepare(22), Err(Error::Capacity { .. })));
}

#[test]
fn ghz_encoding_is_periodic_and_commutes() {
    let base = ghz_prepare(3).unwrap();
    let mut s = base.clone();
    ghz_client_encode(&mut s, 0, 0.0).unwrap();
    assert_eq!(s, base);
    let mut s = base.clone();
    ghz_client_encode(&mut s, 1, std::f64::consts::TAU).unwrap();
    assert!((s.inner(&base).unwrap().norm() - 1.0).abs() < 1e-12);
    for (i, (a, b)) in s.amplitudes().iter().zip(base.amplitudes()).enumerate() {
        assert!((a - b).norm() < 1e-12, "amplitude {i}");
    }
    let mut ab = base.clone();
    ghz_client_encode(&mut ab, 0, 0.7).unwrap();
    ghz_client_encode(&mut ab, 2, -1.3).unwrap();
    let mut ba = base.clone();
    ghz_client_encode(&mut ba, 2, -1.3).unwrap();
    ghz_client_encode(&mut ba, 0, 0.7).unwrap();
    for (a, b) in ab.amplitudes().iter().zip(ba.amplitudes()) {
        assert!((a - b).norm() < 1e-12);
    }
    let all_ones = ab.amplitude(15);
    let expect = Complex64::from_polar(FRAC_1_SQRT_2, 0.6);
    assert!((all_ones - expect).norm() < 1e-12);
}

fn encoded(m: usize, phi: f64) -> StateVector {
    let mut s = ghz_prepare(m).unwrap();
    ghz_client_encode(&mut s, 0, phi).unwrap();
    s
}

#[test]
fn quadrature_probabilities() {
    let mut rng = seeded_rng(1);
    for _ in 0..20 {
        assert_eq!(ghz_decode_shot(encoded(3, 0.0), 3, Quadrature::X, &mut rng).unwrap(), 0);
        assert_eq!(ghz_decode_shot(encoded(3, std::f64::consts::PI), 3, Quadrature::X, &mut rng).unwrap(), 1);
    }
    let shots = 10_000;
    let s = encoded(2, FRAC_PI_2);
    let x = ghz_quadrature_counts(&s, 2, Quadrature::X, shots, &mut rng).unwrap() as f64 / shots as f64;
    let y = ghz_quadrature_counts(&s, 2, Quadrature::Y, shots, &mut rng).unwrap();
    assert!((x - 0.5).abs() <= 3.0 * (0.25 / shots as f64).sqrt());
    assert_eq!(y, shots);
}

#[test]
fn quadrature_statistics_across_grid() {
    let mut rng = seeded_rng(2);
    let shots = 10_000;
    for j in 0..8 {
        let phi = j as f64 * FRAC_PI_4;
        let s = encoded(3, phi);
        for quad in [Quadrature::X, Quadrature::Y] {
            let p = p_zero(phi, quad);
            let f = ghz_quadrature_counts(&s, 3, quad, shots, &mut rng).unwrap() as f64 / shots as f64;
            let sigma = (p * (1.0 - p) / shots as f64).sqrt().max(1e-9);
            assert!((f - p).abs() <= 4.0 * sigma + 1e-12, "phi {phi} {quad:?}: {f} vs {p}");
        }
    }
}

#[test]
fn measuring_client_aborts_readout() {
    let mut rng = seeded_rng(3);
    let mut aborted = 0;
    for _ in 0..50 {
        let mut s = encoded(3, 0.4);
        measure_client(&mut s, 1, &mut rng).unwrap();
        if matches!(ghz_decode_shot(s, 3, Quadrature::X, &mut rng), Err(Error::ProtocolAbort(_))) {
            aborted += 1;
        }
    }
    assert!(aborted > 10);
    let mut s = encoded(3, 0.4);
    measure_client(&mut s, 0, &mut rng).unwrap();
    let mut found = false;
    for _ in 0..20 {
        found |= ghz_quadrature_counts(&s, 3, Quadrature::X, 200, &mut rng).is_err();
    }
    assert!(found);
}

#[test]
fn ghz_sum_estimates() {
    let mut rng = seeded_rng(4);
    let shots = 10_000;
    let cfg = ghz_cfg(3, shots);
    let tol = 3.0 / (shots as f64).sqrt();
    let mut ch = Channel::new();
    let zero = ghz_estimate_sum(&[0.0; 3], &cfg, &mut rng, &mut ch).unwrap();
    assert!(angle_distance(zero.angle, 0.0) <= tol);
    let est = ghz_estimate_sum(&[0.5, 1.0, 2.0], &cfg, &mut rng, &mut ch).unwrap();
    assert!(angle_distance(est.angle, 3.5) <= tol, "{est:?}");
    let wrapped = ghz_estimate_sum(&[std::f64::consts::TAU, 0.2, 0.1], &cfg, &mut rng, &mut ch).unwrap();
    assert!(angle_distance(wrapped.angle, 0.3) <= tol);
    assert_eq!(est.shots_used, 2 * shots as u64);
    assert_eq!(ch.ledger().total_qubits(), 3 * 2 * (2 * shots as u64) * 3);
}

#[test]
fn trusted_client_distribution_costs_the_same() {
    let mut rng = seeded_rng(5);
    let mut ch = Channel::new();
    let cfg = GhzConfig {
        distributor: Distributor::TrustedClient,
        ..ghz_cfg(4, 100)
    };
    ghz_estimate_sum(&[0.1; 4], &cfg, &mut rng, &mut ch).unwrap();
    assert_eq!(ch.ledger().total_qubits(), 2 * 200 * 4);
}

#[test]
fn pairing_attack() {
    let mut rng = seeded_rng(6);
    let cfg = ghz_cfg(3, 10_000);
    let g = [0.4, 1.2, 0.9];
    let report = ghz_malicious_pairing_demo(&g, &cfg, 1, &mut rng, &mut Channel::new()).unwrap();
    assert!(report.leaked_gradient_error <= 0.05, "{report:?}");
    let zero = ghz_malicious_pairing_demo(&[0.4, 0.0, 0.9], &cfg, 1, &mut rng, &mut Channel::new()).unwrap();
    assert!(zero.leaked_gradient_error <= 3.0 * zero.standard_error);
    let honest = ghz_estimate_sum(&g, &cfg, &mut rng, &mut Channel::new()).unwrap();
    assert!(angle_distance(honest.angle, 2.5) <= 0.05);
    let trusted = GhzConfig {
        distributor: Distributor::TrustedClient,
        ..cfg
    };
    assert!(matches!(
        ghz_malicious_pairing_demo(&g, &trusted, 1, &mut rng, &mut Channel::new()),
        Err(Error::AttackUnavailable(_))
    ));
}

#[test]
fn sms_quantization() {
    assert_eq!(sms_quantize(0.0, 5).unwrap(), 0);
    assert_eq!(sms_quantize(std::f64::consts::PI, 3).unwrap(), 4);
    assert_eq!(sms_quantize(std::f64::consts::TAU - 1e-9, 3).unwrap(), 0);
    let mut rng = seeded_rng(7);
    let h = 10;
    let delta = std::f64::consts::TAU / 1024.0;
    for _ in 0..1000 {
        let x = rng.random_range(-10.0..10.0);
        let g = sms_quantize(x, h).unwrap();
        assert!(angle_distance(g as f64 * delta, x) <= delta / 2.0 + 1e-12);
    }
}

#[test]
fn sms_initial_state_cases() {
    let s = sms_initial_state(0, 2).unwrap();
    for l in 0..4 {
        assert_abs_diff_eq!(s.amplitude((l << 2) | l).re, 0.5, epsilon = 1e-15);
    }
    let s = sms_initial_state(1, 1).unwrap();
    assert_abs_diff_eq!(s.amplitude(0).re, FRAC_1_SQRT_2, epsilon = 1e-15);
    assert_abs_diff_eq!(s.amplitude(3).re, -FRAC_1_SQRT_2, epsilon = 1e-15);
    let s = sms_initial_state(5, 3).unwrap();
    for idx in 0..64 {
        let (l, anc) = (idx >> 3, idx & 7);
        let expect = if l == anc {
            Complex64::from_polar(1.0 / 8f64.sqrt(), std::f64::consts::TAU * 5.0 * l as f64 / 8.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
        assert!((s.amplitude(idx) - expect).norm() < 1e-12, "index {idx}");
    }
    assert!(sms_initial_state(8, 3).is_err());
}

#[test]
fn sms_accumulation_is_additive() {
    let h = 4;
    let anc = QubitRange::new(h, h);
    let base = sms_initial_state(3, h).unwrap();
    let mut s = base.clone();
    sms_client_accumulate(&mut s, 0, anc).unwrap();
    assert_eq!(s, base);
    let mut s = base.clone();
    sms_client_accumulate(&mut s, 16, anc).unwrap();
    assert_eq!(s, base);
    let mut two = base.clone();
    sms_client_accumulate(&mut two, 9, anc).unwrap();
    sms_client_accumulate(&mut two, 11, anc).unwrap();
    let mut one = base.clone();
    sms_client_accumulate(&mut one, (9 + 11) % 16, anc).unwrap();
    for (a, b) in two.amplitudes().iter().zip(one.amplitudes()) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn sms_decode_examples() {
    let mut rng = seeded_rng(8);
    let cfg = SmsConfig {
        m: 3,
        h: 4,
        repetitions: 1,
    };
    let run = |g: [f64; 3], rng: &mut crate::SimRng| {
        let delta = cfg.delta();
        let grads = g.map(|x| x * delta);
        sms_run(&grads, &cfg, SmsAdversary::None, rng, &mut Channel::new()).unwrap().sum
    };
    assert_eq!(run([0.0; 3], &mut rng), 0);
    assert_eq!(run([3.0, 5.0, 7.0], &mut rng), 15);
    assert_eq!(run([9.0, 5.0, 2.0], &mut rng), 0);
}

#[test]
fn sms_honest_runs_are_exact() {
    let mut rng = seeded_rng(9);
    for _ in 0..300 {
        let h = rng.random_range(1..=6);
        let m = rng.random_range(1..=5);
        let n = 1u64 << h;
        let g: Vec<u64> = (0..m).map(|_| rng.random_range(0..n)).collect();
        let released = released_state(&g, h, &mut rng).unwrap();
        assert_eq!(sms_server_decode(released, &mut rng).unwrap(), g.iter().sum::<u64>() % n);
    }
}

#[test]
fn sms_server_sees_only_the_sum() {
    let mut rng = seeded_rng(10);
    let a = released_state(&[3, 9, 4], 4, &mut rng).unwrap();
    let b = released_state(&[12, 0, 4], 4, &mut rng).unwrap();
    let c = released_state(&[1, 1, 14], 4, &mut rng).unwrap();
    for other in [&b, &c] {
        for (x, y) in a.amplitudes().iter().zip(other.amplitudes()) {
            assert!((x - y).norm() < 1e-10);
        }
    }
}

#[test]
fn client_order_invariance() {
    let mut rng = seeded_rng(11);
    let g: Vec<u64> = vec![5, 2, 7, 1];
    let mut perm = g[1..].to_vec();
    perm.shuffle(&mut rng);
    let mut shuffled = vec![g[0]];
    shuffled.extend(perm);
    let a = released_state(&g, 4, &mut rng).unwrap();
    let b = released_state(&shuffled, 4, &mut rng).unwrap();
    for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
        assert!((x - y).norm() < 1e-10);
    }
    let phases = [0.3, -1.1, 2.2, 0.9];
    let mut order: Vec<usize> = (0..4).collect();
    let mut s1 = ghz_prepare(4).unwrap();
    for k in &order {
        ghz_client_encode(&mut s1, *k, phases[*k]).unwrap();
    }
    order.shuffle(&mut rng);
    let mut s2 = ghz_prepare(4).unwrap();
    for k in &order {
        ghz_client_encode(&mut s2, *k, phases[*k]).unwrap();
    }
    for (x, y) in s1.amplitudes().iter().zip(s2.amplitudes()) {
        assert!((x - y).norm() < 1e-10);
    }
}

#[test]
fn sms_attacks() {
    let mut rng = seeded_rng(12);
    let cfg = SmsConfig {
        m: 3,
        h: 4,
        repetitions: 1,
    };
    let grads = [0.5, 1.0, 2.0];
    let trials = 1000;
    let mut detected = 0;
    for _ in 0..trials {
        let r = sms_run(&grads, &cfg, SmsAdversary::InverseQftAncilla { client: 1 }, &mut rng, &mut Channel::new());
        detected += usize::from(matches!(r, Err(Error::TamperDetected(_))));
    }
    assert!(detected as f64 / trials as f64 >= 0.93, "{detected}");
    for _ in 0..200 {
        let r = sms_run(&grads, &cfg, SmsAdversary::MeasureAncilla { client: 2 }, &mut rng, &mut Channel::new());
        assert!(r.is_ok());
    }
}

#[test]
fn sms_run_large_h_and_ledger() {
    let mut rng = seeded_rng(13);
    let cfg = SmsConfig {
        m: 4,
        h: 12,
        repetitions: 1,
    };
    assert_eq!(cfg.backend(), SmsBackend::Mirrored);
    let mut ch = Channel::new();
    let grads = [0.3, 0.7, 1.1, 1.9];
    let out = sms_run(&grads, &cfg, SmsAdversary::None, &mut rng, &mut ch).unwrap();
    assert!((out.estimate.angle - 4.0).abs() <= 4.0 * cfg.delta() / 2.0);
    sms_run(&[0.1; 4], &cfg, SmsAdversary::None, &mut rng, &mut ch).unwrap();
    assert_eq!(ch.ledger().total_qubits(), 120);
    assert!(sms_run(&grads, &cfg, SmsAdversary::MeasureAncilla { client: 1 }, &mut rng, &mut ch).is_err());

    let three = SmsConfig { repetitions: 3, ..cfg };
    let out = sms_run(&grads, &three, SmsAdversary::None, &mut rng, &mut Channel::new()).unwrap();
    assert_eq!(out.agreeing, 3);
}

#[test]
fn dense_and_mirrored_agree() {
    let mut rng = seeded_rng(14);
    for _ in 0..20 {
        let grads: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        let dense = SmsConfig { m: 3, h: 8, repetitions: 1 };
        assert_eq!(dense.backend(), SmsBackend::Dense);
        let a = sms_run(&grads, &dense, SmsAdversary::None, &mut rng, &mut Channel::new()).unwrap();
        let expect = grads.iter().map(|g| sms_quantize(*g, 8).unwrap()).sum::<u64>() % 256;
        assert_eq!(a.sum, expect);
    }
    assert_eq!(h_for_epsilon(4, 0.01), 11);
}

#[test]
fn centered_representative() {
    let e = PhaseEstimate {
        angle: 6.0,
        standard_error: 0.0,
        shots_used: 1,
    };
    assert_abs_diff_eq!(e.centered(), 6.0 - std::f64::consts::TAU, epsilon = 1e-15);
    assert_eq!(wrap_angle(-0.5), std::f64::consts::TAU - 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn sms_state_depends_only_on_sum(h in 1usize..=5, seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let n = 1u64 << h;
        let g: Vec<u64> = (0..3).map(|_| rng.random_range(0..n)).collect();
        let shift = rng.random_range(0..n);
        let other = vec![g[0], (g[1] + shift) % n, (g[2] + n - shift) % n];
        let a = released_state(&g, h, &mut rng).unwrap();
        let b = released_state(&other, h, &mut rng).unwrap();
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            prop_assert!((x - y).norm() < 1e-10);
        }
    }
}
