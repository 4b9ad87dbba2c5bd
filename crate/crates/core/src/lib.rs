//! Desk-scale simulation of federated-learning aggregation protocols that hide
//! client gradients inside quantum states.
//!
//! The crate is organised bottom-up:
//!
//! * [`statevector`] – dense statevector simulator (gates, QFT, SWAP test,
//!   Grover diffusion, quantum counting).
//! * [`flmodel`] – softmax classifier, analytic gradients, the federated
//!   update rule and the single-sample gradient inversion attack.
//! * [`channel`] – party-to-party message fabric with exact qubit/bit
//!   accounting and decoy-state eavesdropper detection.
//! * [`css`] – pairwise one-time-pad masking baseline and its amplitude
//!   encoded SWAP-test variant.
//! * [`bqbc`] – blind quantum bipartite correlator aggregation, redundant
//!   encoding and the biased-index-state attack.
//! * [`incremental`] – GHZ phase aggregation and secure multiparty summation.
//! * [`experiment`] – end-to-end training, attack demos, cost sweeps and
//!   decoy sweeps driven by a TOML configuration.

pub mod bqbc;
pub mod channel;
pub mod css;
pub mod error;
pub mod experiment;
pub mod flmodel;
pub mod incremental;
pub mod statevector;

pub use channel::{Channel, Ledger, PartyId, Protocol};
pub use error::{Error, Result};
pub use flmodel::{ClientShard, Dataset, GradientSet, ModelParams, Sample};
pub use statevector::{Gate, QubitRange, StateVector};

/// Deterministic RNG used throughout the crate.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Build the crate's RNG from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}
