//! Party-to-party message fabric with exact qubit and bit accounting.
//!
//! Every protocol step that moves a register or a classical value between
//! parties goes through a [`Channel`], which appends to its [`Ledger`]. An
//! optional [`DecoyGuard`] interleaves decoy qubits with each quantum
//! transmission and aborts when an eavesdropper is detected.

mod decoy;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::statevector::StateVector;

pub use decoy::{
    decoy_verify, decoy_wrap, eve_intercept_resend, prepare_decoy, side_channel_bits, Basis, DecoyBatch, DecoyCheck,
    DecoyConfig, DecoyGuard, DecoyPrep, DecoyStats, EveModel,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PartyId {
    Server,
    Client(usize),
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Server => write!(f, "server"),
            PartyId::Client(k) => write!(f, "client{k}"),
        }
    }
}

/// Ledger tag identifying which protocol a transmission belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    CssClassical,
    CssQuantum,
    Bqbc,
    Ghz,
    Sms,
    Decoy,
}

impl Protocol {
    pub fn tag(self) -> &'static str {
        match self {
            Protocol::CssClassical => "css-classical",
            Protocol::CssQuantum => "css-quantum",
            Protocol::Bqbc => "bqbc",
            Protocol::Ghz => "ghz",
            Protocol::Sms => "sms",
            Protocol::Decoy => "decoy",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// One ledger record. A record may aggregate several identical
/// transmissions, in which case `qubits` is the total over all of them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub from: PartyId,
    pub to: PartyId,
    pub protocol: Protocol,
    pub round: u64,
    pub qubits: u64,
    pub classical_bits: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupKey {
    Protocol,
    Round,
    Pair,
}

/// One row of [`Ledger::report`]; keys not grouped on are `None`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReportRow {
    pub protocol: Option<Protocol>,
    pub round: Option<u64>,
    pub pair: Option<(PartyId, PartyId)>,
    pub qubits: u64,
    pub classical_bits: u64,
}

/// Append-only record of transmissions.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Ledger {
    entries: Vec<LedgerEntry>,
}

type RowKey = (Option<Protocol>, Option<u64>, Option<(PartyId, PartyId)>);

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_qubits(&self) -> u64 {
        self.entries.iter().map(|e| e.qubits).sum()
    }

    pub fn total_classical_bits(&self) -> u64 {
        self.entries.iter().map(|e| e.classical_bits).sum()
    }

    pub fn qubits_for(&self, protocol: Protocol) -> u64 {
        self.entries.iter().filter(|e| e.protocol == protocol).map(|e| e.qubits).sum()
    }

    pub fn classical_bits_for(&self, protocol: Protocol) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.protocol == protocol)
            .map(|e| e.classical_bits)
            .sum()
    }

    /// Move all entries of `other` onto the end of this ledger.
    pub fn absorb(&mut self, other: Ledger) {
        self.entries.extend(other.entries);
    }

    fn push(&mut self, entry: LedgerEntry) -> Result<()> {
        if entry.from == entry.to {
            return Err(domain(format!("{} cannot send to itself", entry.from)));
        }
        if entry.qubits == 0 && entry.classical_bits == 0 {
            return Err(domain("empty transmission"));
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Totals partitioned by the given keys, sorted by key.
    pub fn report(&self, keys: &[GroupKey]) -> Vec<ReportRow> {
        let mut groups: BTreeMap<RowKey, (u64, u64)> = BTreeMap::new();
        for e in &self.entries {
            let key = (
                keys.contains(&GroupKey::Protocol).then_some(e.protocol),
                keys.contains(&GroupKey::Round).then_some(e.round),
                keys.contains(&GroupKey::Pair).then_some((e.from, e.to)),
            );
            let slot = groups.entry(key).or_default();
            slot.0 += e.qubits;
            slot.1 += e.classical_bits;
        }
        groups
            .into_iter()
            .map(|((protocol, round, pair), (qubits, classical_bits))| ReportRow {
                protocol,
                round,
                pair,
                qubits,
                classical_bits,
            })
            .collect()
    }

    /// CSV with columns `protocol,round,from,to,qubits,classical_bits`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["protocol", "round", "from", "to", "qubits", "classical_bits"])?;
        for e in &self.entries {
            w.write_record([
                e.protocol.tag().to_string(),
                e.round.to_string(),
                e.from.to_string(),
                e.to.to_string(),
                e.qubits.to_string(),
                e.classical_bits.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Ledger plus the current round counter and an optional decoy guard.
#[derive(Debug, Default)]
pub struct Channel {
    ledger: Ledger,
    round: u64,
    guard: Option<DecoyGuard>,
}

impl Channel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_guard(guard: DecoyGuard) -> Self {
        Self {
            guard: Some(guard),
            ..Self::default()
        }
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn into_ledger(self) -> Ledger {
        self.ledger
    }

    pub fn take_ledger(&mut self) -> Ledger {
        std::mem::take(&mut self.ledger)
    }

    pub fn guard(&self) -> Option<&DecoyGuard> {
        self.guard.as_ref()
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn set_round(&mut self, round: u64) {
        self.round = round;
    }

    /// Hand a register to another party. The payload is returned to the
    /// caller, which from then on acts as the receiver.
    pub fn send_quantum(
        &mut self,
        from: PartyId,
        to: PartyId,
        payload: StateVector,
        protocol: Protocol,
    ) -> Result<StateVector> {
        self.charge_quantum(from, to, payload.num_qubits(), 1, protocol)?;
        Ok(payload)
    }

    /// Record `repetitions` transmissions of a `width`-qubit register whose
    /// state is simulated elsewhere (for example inside a controlled oracle).
    pub fn charge_quantum(
        &mut self,
        from: PartyId,
        to: PartyId,
        width: usize,
        repetitions: u64,
        protocol: Protocol,
    ) -> Result<()> {
        if width == 0 || repetitions == 0 {
            return Err(domain("quantum send of zero qubits"));
        }
        self.ledger.push(LedgerEntry {
            from,
            to,
            protocol,
            round: self.round,
            qubits: width as u64 * repetitions,
            classical_bits: 0,
        })?;
        if let Some(guard) = self.guard.as_mut() {
            guard.protect(&mut self.ledger, (from, to), width, repetitions, self.round)?;
        }
        Ok(())
    }

    pub fn send_classical(&mut self, from: PartyId, to: PartyId, bits: u64, protocol: Protocol) -> Result<()> {
        if bits == 0 {
            return Err(domain("classical send of zero bits"));
        }
        self.ledger.push(LedgerEntry {
            from,
            to,
            protocol,
            round: self.round,
            qubits: 0,
            classical_bits: bits,
        })
    }
}

#[cfg(test)]
mod tests;
