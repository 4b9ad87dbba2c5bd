use thiserror::Error;

/// Errors raised by the simulator, the protocols and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("register of {requested} qubits exceeds the simulator cap of {cap}")]
    Capacity { requested: usize, cap: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("gradient inversion infeasible: every bias gradient is below {tolerance:e}")]
    InversionInfeasible { tolerance: f64 },

    #[error("tamper detected: {0}")]
    TamperDetected(String),

    #[error("eavesdropper detected: {mismatches} of {checked} decoys disturbed")]
    EavesdropperDetected { checked: usize, mismatches: usize },

    #[error("protocol aborted: {0}")]
    ProtocolAbort(String),

    #[error("attack unavailable: {0}")]
    AttackUnavailable(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

impl Error {
    /// Tamper, eavesdropper or readout-consistency aborts raised mid-protocol.
    pub fn is_protocol_abort(&self) -> bool {
        matches!(
            self,
            Error::TamperDetected(_) | Error::EavesdropperDetected { .. } | Error::ProtocolAbort(_)
        )
    }
}
