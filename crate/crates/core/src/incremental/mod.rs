//! Phase-based aggregation protocols for incremental learning: GHZ
//! aggregation with two-quadrature Ramsey readout, and secure multiparty
//! summation in the Fourier phases of a travelling register.

mod ghz;
mod sms;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

pub use ghz::{
    ghz_client_encode, ghz_decode_shot, ghz_estimate_sum, ghz_malicious_pairing_demo, ghz_prepare, ghz_quadrature_counts,
    pairing_state, ramsey_estimate, Distributor, GhzConfig, PairingReport, Quadrature,
};
pub use sms::{
    h_for_epsilon, sms_client_accumulate, sms_initial_state, sms_quantize, sms_run, sms_server_decode,
    sms_verify_and_release, SmsAdversary, SmsBackend, SmsConfig, SmsOutcome, DENSE_SMS_QUBITS,
};

/// An angle in `[0, 2 pi)` with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseEstimate {
    pub angle: f64,
    pub standard_error: f64,
    pub shots_used: u64,
}

impl PhaseEstimate {
    /// Representative of the angle in `(-pi, pi]`.
    pub fn centered(&self) -> f64 {
        if self.angle > PI {
            self.angle - TAU
        } else {
            self.angle
        }
    }
}

/// Reduce into `[0, 2 pi)`.
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Distance between two angles on the circle.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    d.min(TAU - d)
}

#[cfg(test)]
mod tests;
