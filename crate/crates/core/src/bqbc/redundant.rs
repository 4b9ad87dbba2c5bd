//! Redundant encoding: each bit pair `(a_ki, b_ki)` becomes a group of `r`
//! digits, only one of which (at a secret position) carries `b_ki`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BitMatrix;
use crate::error::{domain, Result};

/// Filler used in a client's non-information digits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Zeros elsewhere.
    Zeros,
    /// Ones elsewhere; the server must subtract `(r-1) sum_i a_ki`.
    Ones,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RedundantCode {
    pub r: usize,
    /// Information-carrying digit of each group, in `1..=r`.
    pub positions: Vec<Vec<usize>>,
    pub methods: Vec<Method>,
    /// `a` with every bit repeated `r` times; rows of length `r l0`.
    pub a: BitMatrix,
    pub b: BitMatrix,
}

/// Expand with uniformly random positions and per-client methods.
pub fn redundant_encode<R: Rng + ?Sized>(a: &[Vec<u8>], b: &[Vec<u8>], r: usize, rng: &mut R) -> Result<RedundantCode> {
    if r == 0 {
        return Err(domain("redundancy factor must be at least 1"));
    }
    let positions = b
        .iter()
        .map(|row| row.iter().map(|_| rng.random_range(1..=r)).collect())
        .collect();
    let methods = b
        .iter()
        .map(|_| if rng.random::<bool>() { Method::Ones } else { Method::Zeros })
        .collect();
    redundant_encode_with(a, b, r, positions, methods)
}

/// Expand with caller-chosen positions and methods.
pub fn redundant_encode_with(
    a: &[Vec<u8>],
    b: &[Vec<u8>],
    r: usize,
    positions: Vec<Vec<usize>>,
    methods: Vec<Method>,
) -> Result<RedundantCode> {
    if r == 0 {
        return Err(domain("redundancy factor must be at least 1"));
    }
    if a.len() != b.len() || positions.len() != b.len() || methods.len() != b.len() {
        return Err(domain("codes, positions and methods must cover the same clients"));
    }
    let mut ea = Vec::with_capacity(a.len());
    let mut eb = Vec::with_capacity(b.len());
    for k in 0..b.len() {
        if a[k].len() != b[k].len() || positions[k].len() != b[k].len() {
            return Err(domain(format!("client {k}: rows differ in length")));
        }
        let filler = match methods[k] {
            Method::Zeros => 0,
            Method::Ones => 1,
        };
        let mut ra = Vec::with_capacity(r * a[k].len());
        let mut rb = Vec::with_capacity(r * b[k].len());
        for i in 0..b[k].len() {
            let pos = positions[k][i];
            if !(1..=r).contains(&pos) {
                return Err(domain(format!("position {pos} outside 1..={r}")));
            }
            for j in 1..=r {
                ra.push(a[k][i]);
                rb.push(if j == pos { b[k][i] } else { filler });
            }
        }
        ea.push(ra);
        eb.push(rb);
    }
    Ok(RedundantCode {
        r,
        positions,
        methods,
        a: ea,
        b: eb,
    })
}

/// Recover `sum a b` from the normalized estimate over the expanded codes,
/// `raw = (1/(m r l0)) sum a' b'`.
pub fn redundant_reconcile(raw: f64, methods: &[Method], a: &[Vec<u8>], r: usize) -> Result<f64> {
    if methods.len() != a.len() || a.is_empty() {
        return Err(domain("one method flag per client required"));
    }
    let l0 = a[0].len();
    let m = a.len();
    let filler: usize = methods
        .iter()
        .zip(a)
        .filter(|(meth, _)| **meth == Method::Ones)
        .map(|(_, row)| (r - 1) * row.iter().filter(|v| **v == 1).count())
        .sum();
    Ok(raw * (m * r * l0) as f64 - filler as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LeakBound {
    pub probability: f64,
    /// `true` when `1/(r m l0 eps)` exceeded one.
    pub clamped: bool,
}

/// Chance that a cheating server learns one specific bit: `1/(r m l0 eps)`.
pub fn leak_probability(r: usize, m: usize, l0: usize, epsilon: f64) -> Result<LeakBound> {
    if r == 0 || m == 0 || l0 == 0 || epsilon <= 0.0 {
        return Err(domain("leak bound arguments must be positive"));
    }
    let p = 1.0 / ((r * m * l0) as f64 * epsilon);
    Ok(LeakBound {
        probability: p.min(1.0),
        clamped: p > 1.0,
    })
}
