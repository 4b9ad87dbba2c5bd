use super::*;
use crate::error::Error;
use crate::seeded_rng;
use proptest::prelude::*;

const S: PartyId = PartyId::Server;
const C0: PartyId = PartyId::Client(0);
const C1: PartyId = PartyId::Client(1);

#[test]
fn party_and_protocol_names() {
    assert_eq!(S.to_string(), "server");
    assert_eq!(PartyId::Client(3).to_string(), "client3");
    assert_eq!(Protocol::CssQuantum.tag(), "css-quantum");
    assert_eq!(serde_json::to_string(&Protocol::CssClassical).unwrap(), "\"css-classical\"");
}

#[test]
fn quantum_send_records_width() {
    let mut ch = Channel::new();
    let state = StateVector::basis(5, 3).unwrap();
    let received = ch.send_quantum(S, C1, state.clone(), Protocol::Bqbc).unwrap();
    assert_eq!(received, state);
    let e = &ch.ledger().entries()[0];
    assert_eq!((e.qubits, e.classical_bits, e.from, e.to), (5, 0, S, C1));
    ch.send_quantum(C1, S, StateVector::basis(3, 0).unwrap(), Protocol::Bqbc)
        .unwrap();
    assert_eq!(ch.ledger().entries().len(), 2);
    assert_eq!(ch.ledger().total_qubits(), 8);
}

#[test]
fn ring_pass_hop_count() {
    // m = 4 clients, 6-qubit register: server -> c0 -> ... -> c3 -> server.
    let m = 4;
    let mut ch = Channel::new();
    let mut state = StateVector::basis(6, 0).unwrap();
    let mut holder = S;
    for k in 0..m {
        state = ch.send_quantum(holder, PartyId::Client(k), state, Protocol::Bqbc).unwrap();
        holder = PartyId::Client(k);
    }
    ch.send_quantum(holder, S, state, Protocol::Bqbc).unwrap();
    assert_eq!(ch.ledger().total_qubits(), 30);
}

#[test]
fn classical_sends() {
    let mut ch = Channel::new();
    ch.send_classical(C0, S, 1, Protocol::Bqbc).unwrap();
    assert_eq!(ch.ledger().entries()[0].classical_bits, 1);
    let m = 4;
    let mut pads = Channel::new();
    for i in 0..m {
        for k in 0..m {
            if i != k {
                pads.send_classical(PartyId::Client(i), PartyId::Client(k), 64, Protocol::CssClassical)
                    .unwrap();
            }
        }
    }
    assert_eq!(pads.ledger().total_classical_bits(), 768);
    assert!(matches!(ch.send_classical(C0, S, 0, Protocol::Bqbc), Err(Error::Domain(_))));
    assert!(matches!(ch.send_classical(C0, C0, 3, Protocol::Bqbc), Err(Error::Domain(_))));
    assert!(ch.charge_quantum(S, S, 2, 1, Protocol::Ghz).is_err());
    assert!(ch.charge_quantum(S, C0, 0, 1, Protocol::Ghz).is_err());
}

#[test]
fn aggregated_charge() {
    let mut ch = Channel::new();
    ch.charge_quantum(S, C0, 5, 127, Protocol::Bqbc).unwrap();
    assert_eq!(ch.ledger().total_qubits(), 635);
}

#[test]
fn report_grouping() {
    assert!(Ledger::new().report(&[GroupKey::Protocol]).is_empty());
    let mut ch = Channel::new();
    ch.charge_quantum(S, C0, 3, 1, Protocol::Ghz).unwrap();
    ch.charge_quantum(S, C0, 5, 1, Protocol::Ghz).unwrap();
    ch.set_round(1);
    ch.send_classical(C0, C1, 7, Protocol::CssClassical).unwrap();
    let by_pair = ch.ledger().report(&[GroupKey::Protocol, GroupKey::Pair]);
    assert_eq!(by_pair.len(), 2);
    let ghz = by_pair.iter().find(|r| r.protocol == Some(Protocol::Ghz)).unwrap();
    assert_eq!(ghz.qubits, 8);
    assert_eq!(ghz.pair, Some((S, C0)));
    let by_round = ch.ledger().report(&[GroupKey::Round]);
    assert_eq!(by_round.iter().map(|r| r.round.unwrap()).collect::<Vec<_>>(), vec![0, 1]);
    let all = ch.ledger().report(&[]);
    assert_eq!(all.len(), 1);
    assert_eq!((all[0].qubits, all[0].classical_bits), (8, 7));
}

#[test]
fn csv_export() {
    let mut ch = Channel::new();
    ch.charge_quantum(S, C1, 4, 2, Protocol::Sms).unwrap();
    let mut buf = Vec::new();
    ch.ledger().write_csv(&mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "protocol,round,from,to,qubits,classical_bits\nsms,0,server,client1,8,0\n"
    );
}

#[test]
fn decoy_wrap_shapes() {
    let mut rng = seeded_rng(1);
    let empty = decoy_wrap(8, 0, &mut rng);
    assert!(empty.positions.is_empty() && empty.preparations.is_empty());
    assert_eq!(side_channel_bits(8, 0), 0);
    let b = decoy_wrap(8, 8, &mut rng);
    assert_eq!(b.positions.len(), 8);
    assert_eq!(b.preparations.len(), 8);
    assert!(b.positions.windows(2).all(|w| w[0] < w[1]));
    assert!(b.positions.iter().all(|p| *p < 16));
    // 16 slots -> 4 index bits + 2 flags per decoy.
    assert_eq!(side_channel_bits(8, 8), 48);
}

#[test]
fn decoy_pool_is_uniform() {
    let mut rng = seeded_rng(2);
    let mut counts = [0usize; 4];
    let total = 40_000;
    for _ in 0..total / 8 {
        for p in decoy_wrap(8, 8, &mut rng).preparations {
            counts[2 * usize::from(p.basis == Basis::X) + p.bit as usize] += 1;
        }
    }
    for c in counts {
        assert!((c as f64 / total as f64 - 0.25).abs() <= 0.01, "{counts:?}");
    }
}

#[test]
fn undisturbed_decoys_always_pass() {
    let mut rng = seeded_rng(3);
    for _ in 0..500 {
        let b = decoy_wrap(4, 6, &mut rng);
        let mut decoys: Vec<_> = b.preparations.iter().map(|p| prepare_decoy(*p)).collect();
        let check = decoy_verify(&mut decoys, &b.preparations, &mut rng).unwrap();
        assert_eq!(check.mismatches, 0);
        assert!(!check.eavesdropper_detected);
    }
    let b = decoy_wrap(1, 2, &mut rng);
    let mut short = vec![prepare_decoy(b.preparations[0])];
    assert!(decoy_verify(&mut short, &b.preparations, &mut rng).is_err());
}

#[test]
fn eve_in_matching_basis_is_invisible() {
    let mut rng = seeded_rng(4);
    for bit in 0..2u8 {
        for basis in [Basis::Z, Basis::X] {
            let prep = DecoyPrep { basis, bit };
            let mut d = prepare_decoy(prep);
            // Eve measuring in the preparation basis leaves an eigenstate alone.
            if basis == Basis::X {
                d.apply_gate(crate::Gate::H, 0).unwrap();
            }
            d.measure(crate::QubitRange::new(0, 1), &mut rng).unwrap();
            if basis == Basis::X {
                d.apply_gate(crate::Gate::H, 0).unwrap();
            }
            assert!(d.inner(&prepare_decoy(prep)).unwrap().norm() > 1.0 - 1e-12);
        }
    }
}

#[test]
fn single_decoy_detection_rate_is_one_quarter() {
    let trials = 10_000;
    let mut guard = DecoyGuard::new(DecoyConfig { n_d: Some(1), seed: 5 }, EveModel::InterceptResend { seed: 6 });
    let mut detected = 0;
    for _ in 0..trials {
        detected += usize::from(guard.check(3).unwrap().1.eavesdropper_detected);
    }
    let rate = detected as f64 / trials as f64;
    assert!((rate - 0.25).abs() <= 0.02, "rate {rate}");
}

#[test]
fn sixteen_decoys_detect_nearly_always() {
    let trials = 1000;
    let mut guard = DecoyGuard::new(DecoyConfig { n_d: Some(16), seed: 7 }, EveModel::InterceptResend { seed: 8 });
    let mut detected = 0;
    for _ in 0..trials {
        detected += usize::from(guard.check(16).unwrap().1.eavesdropper_detected);
    }
    let expect = 1.0 - 0.75f64.powi(16);
    assert!((detected as f64 / trials as f64 - expect).abs() <= 0.02);
}

#[test]
fn guarded_channel_charges_and_aborts() {
    let quiet = DecoyGuard::new(DecoyConfig { n_d: None, seed: 9 }, EveModel::None);
    let mut ch = Channel::with_guard(quiet);
    ch.charge_quantum(S, C0, 8, 3, Protocol::Sms).unwrap();
    assert_eq!(ch.ledger().qubits_for(Protocol::Sms), 24);
    assert_eq!(ch.ledger().qubits_for(Protocol::Decoy), 24);
    assert_eq!(ch.ledger().classical_bits_for(Protocol::Decoy), 3 * side_channel_bits(8, 8));
    assert_eq!(ch.guard().unwrap().stats().mismatches, 0);

    let eve = DecoyGuard::new(DecoyConfig { n_d: Some(16), seed: 10 }, EveModel::InterceptResend { seed: 11 });
    let mut ch = Channel::with_guard(eve);
    let mut aborted = false;
    for _ in 0..10 {
        if let Err(Error::EavesdropperDetected { checked, mismatches }) =
            ch.send_quantum(S, C0, StateVector::basis(2, 0).unwrap(), Protocol::Ghz)
        {
            assert_eq!(checked, 16);
            assert!(mismatches > 0);
            aborted = true;
            break;
        }
    }
    assert!(aborted);
}

proptest! {
    #[test]
    fn report_partitions_conserve_totals(
        sends in proptest::collection::vec((0usize..4, 1usize..4, 0u64..3, 0u64..20, 0u64..20, 0usize..3), 1..40)
    ) {
        let protocols = [Protocol::Ghz, Protocol::Sms, Protocol::Bqbc];
        let mut ledger = Ledger::new();
        for (from, to_off, round, q, b, p) in sends {
            if q == 0 && b == 0 {
                continue;
            }
            let to = (from + to_off) % 5;
            let party = |i: usize| if i == 4 { PartyId::Server } else { PartyId::Client(i) };
            ledger.push(LedgerEntry {
                from: party(from),
                to: party(to),
                protocol: protocols[p],
                round,
                qubits: q,
                classical_bits: b,
            }).unwrap();
        }
        let keysets: [&[GroupKey]; 4] = [
            &[GroupKey::Protocol],
            &[GroupKey::Round],
            &[GroupKey::Pair],
            &[GroupKey::Protocol, GroupKey::Round, GroupKey::Pair],
        ];
        for keys in keysets {
            let rows = ledger.report(keys);
            prop_assert_eq!(rows.iter().map(|r| r.qubits).sum::<u64>(), ledger.total_qubits());
            prop_assert_eq!(rows.iter().map(|r| r.classical_bits).sum::<u64>(), ledger.total_classical_bits());
        }
    }
}
