//! TOML experiment configuration. Every section and field has a default, so
//! an empty file is a valid plain-protocol run.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bqbc::Layout;
use crate::css::{index_qubits, CssConfig};
use crate::error::{Error, Result};
use crate::flmodel::SyntheticTask;
use crate::incremental::{Distributor, SmsBackend, SmsConfig};
use crate::statevector::DEFAULT_QUBIT_CAP;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    #[default]
    Plain,
    Css,
    CssQuantum,
    Bqbc,
    Ghz,
    Sms,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 6] = [
        ProtocolKind::Plain,
        ProtocolKind::Css,
        ProtocolKind::CssQuantum,
        ProtocolKind::Bqbc,
        ProtocolKind::Ghz,
        ProtocolKind::Sms,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Plain => "plain",
            ProtocolKind::Css => "css",
            ProtocolKind::CssQuantum => "css-quantum",
            ProtocolKind::Bqbc => "bqbc",
            ProtocolKind::Ghz => "ghz",
            ProtocolKind::Sms => "sms",
        }
    }

    /// Aggregates are phases reduced modulo `2 pi`.
    pub fn is_phase_based(self) -> bool {
        matches!(self, ProtocolKind::Ghz | ProtocolKind::Sms)
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown protocol `{s}` (expected one of plain, css, css-quantum, bqbc, ghz, sms)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    /// `n`.
    pub features: usize,
    /// `C`.
    pub classes: usize,
    /// `N_i`; its length is the number of clients `m`.
    pub samples_per_client: Vec<usize>,
    pub separation: f64,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            features: 10,
            classes: 3,
            samples_per_client: vec![40, 40, 40, 40],
            separation: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    /// `T`.
    pub iterations: usize,
    /// `alpha`.
    pub learning_rate: f64,
    /// Standard deviation of the initial parameters.
    pub init_scale: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            iterations: 50,
            learning_rate: 0.5,
            init_scale: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CssSection {
    pub modulus_bits: u32,
    pub frac_bits: u32,
    /// SWAP tests per parameter for `css-quantum`.
    pub shots: usize,
}

impl Default for CssSection {
    fn default() -> Self {
        Self {
            modulus_bits: 64,
            frac_bits: 40,
            shots: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BqbcSection {
    pub l0: usize,
    /// Target error of the convolution estimate, per parameter.
    pub epsilon: f64,
    /// Use exact counting instead of phase estimation.
    pub exact: bool,
    pub padding: bool,
    /// Gradients are clipped to `|g| < 2^gradient_exponent`.
    pub gradient_exponent: i32,
}

impl Default for BqbcSection {
    fn default() -> Self {
        Self {
            l0: 12,
            epsilon: 0.05,
            exact: true,
            padding: false,
            gradient_exponent: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GhzSection {
    pub shots_per_quadrature: usize,
    pub distributor: Distributor,
}

impl Default for GhzSection {
    fn default() -> Self {
        Self {
            shots_per_quadrature: 2_000,
            distributor: Distributor::Server,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmsSection {
    pub h: usize,
    pub repetitions: usize,
}

impl Default for SmsSection {
    fn default() -> Self {
        Self { h: 12, repetitions: 1 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackDemo {
    /// Single-sample gradient inversion against what the server sees.
    #[default]
    Inversion,
    /// Equation census and least-squares attempt for batches `1..=batch`.
    Census,
    /// Concentrated index state against BQBC.
    BqbcBiased,
    /// Bell pair in place of the GHZ state.
    GhzPairing,
    /// A ring client applying an inverse QFT to the SMS ancilla.
    SmsIqft,
}

impl AttackDemo {
    pub fn name(self) -> &'static str {
        match self {
            AttackDemo::Inversion => "inversion",
            AttackDemo::Census => "census",
            AttackDemo::BqbcBiased => "bqbc-biased",
            AttackDemo::GhzPairing => "ghz-pairing",
            AttackDemo::SmsIqft => "sms-iqft",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub demo: AttackDemo,
    pub trials: usize,
    /// Largest batch size for the census demo.
    pub batch: usize,
    /// Client targeted by the pairing, biased-state and iQFT demos.
    pub target_client: usize,
    /// Bit position targeted by the biased-state demo.
    pub target_bit: usize,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            demo: AttackDemo::Inversion,
            trials: 100,
            batch: 4,
            target_client: 1,
            target_bit: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoySection {
    /// Protect every quantum transmission of a training run.
    pub enabled: bool,
    /// Decoys per transmission; `None` uses one per payload qubit.
    pub n_d: Option<usize>,
    /// Intercept-resend eavesdropper on every quantum hop.
    pub eve: bool,
    /// `n_d` values for the detection sweep.
    pub sweep: Vec<usize>,
    pub trials: usize,
    /// Payload width used by the sweep.
    pub payload_qubits: usize,
}

impl Default for DecoySection {
    fn default() -> Self {
        Self {
            enabled: false,
            n_d: None,
            eve: false,
            sweep: vec![1, 2, 4, 8, 16],
            trials: 1_000,
            payload_qubits: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostProtocol {
    CssClassical,
    CssQuantum,
    Bqbc,
    Ghz,
    Sms,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Number of clients `m`.
    Clients,
    /// Number of parameters `d`.
    Parameters,
    /// Shots, i.e. `1/eps^2` for the sampling protocols.
    Shots,
    /// Counting qubits `t`, i.e. `log(1/eps)` for BQBC.
    CountingQubits,
}

/// One axis of a cost sweep; unlisted quantities take the sweep defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSweep {
    pub protocol: CostProtocol,
    pub axis: SweepAxis,
    pub values: Vec<u64>,
    /// Expected log-log slope and its tolerance.
    pub expected_slope: Option<f64>,
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostsSection {
    pub clients: usize,
    pub parameters: usize,
    pub shots: u64,
    pub counting_qubits: usize,
    pub l0: usize,
    pub h: usize,
    /// Empty means the built-in complexity sweeps.
    pub sweeps: Vec<CostSweep>,
}

impl Default for CostsSection {
    fn default() -> Self {
        Self {
            clients: 4,
            parameters: 4,
            shots: 100,
            counting_qubits: 4,
            l0: 16,
            h: 8,
            sweeps: Vec::new(),
        }
    }
}

/// Built-in sweeps: one per communication-complexity law.
pub fn default_sweeps() -> Vec<CostSweep> {
    let sweep = |protocol, axis, values: &[u64], slope: Option<f64>, tol: Option<f64>| CostSweep {
        protocol,
        axis,
        values: values.to_vec(),
        expected_slope: slope,
        tolerance: tol,
    };
    vec![
        sweep(CostProtocol::CssClassical, SweepAxis::Clients, &[2, 4, 8, 16], Some(2.0), Some(0.15)),
        sweep(CostProtocol::Bqbc, SweepAxis::Clients, &[2, 4, 8, 16], Some(1.0), Some(0.1)),
        sweep(CostProtocol::Ghz, SweepAxis::Clients, &[2, 4, 8, 16], Some(1.0), Some(0.1)),
        sweep(CostProtocol::Sms, SweepAxis::Clients, &[8, 16, 32, 64], Some(1.0), Some(0.1)),
        sweep(CostProtocol::Ghz, SweepAxis::Shots, &[100, 200, 400, 800], Some(1.0), Some(0.05)),
        sweep(CostProtocol::CssQuantum, SweepAxis::Shots, &[1_000, 2_000, 4_000, 8_000], Some(1.0), Some(0.05)),
        sweep(CostProtocol::CssClassical, SweepAxis::Parameters, &[1, 2, 4, 8], Some(1.0), Some(0.05)),
        sweep(CostProtocol::Bqbc, SweepAxis::CountingQubits, &[3, 4, 5, 6, 7, 8], None, None),
    ]
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: ProtocolKind,
    pub seed: u64,
    /// Directory for reports; the CLI's `--out` takes precedence.
    pub output: Option<PathBuf>,
    pub task: TaskSection,
    pub training: TrainingSection,
    pub css: CssSection,
    pub bqbc: BqbcSection,
    pub ghz: GhzSection,
    pub sms: SmsSection,
    pub attack: AttackSection,
    pub decoy: DecoySection,
    pub costs: CostsSection,
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_error(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_error(e.to_string()))
    }

    /// `m`.
    pub fn clients(&self) -> usize {
        self.task.samples_per_client.len()
    }

    /// `d = nC + C`.
    pub fn parameters(&self) -> usize {
        self.task.features * self.task.classes + self.task.classes
    }

    pub fn synthetic_task(&self) -> SyntheticTask {
        SyntheticTask {
            features: self.task.features,
            classes: self.task.classes,
            samples_per_client: self.task.samples_per_client.clone(),
            separation: self.task.separation,
            seed: self.seed,
        }
    }

    pub fn css_config(&self) -> CssConfig {
        CssConfig {
            m: self.clients(),
            d: self.parameters(),
            modulus_bits: self.css.modulus_bits,
            frac_bits: self.css.frac_bits,
        }
    }

    pub fn sms_config(&self) -> SmsConfig {
        SmsConfig {
            m: self.clients(),
            h: self.sms.h,
            repetitions: self.sms.repetitions,
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring the output location.
    pub fn digest(&self) -> String {
        let canonical = ExperimentConfig {
            output: None,
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical).expect("configuration serializes");
        hex::encode(Sha256::digest(json))
    }

    /// Cross-field checks for the selected protocol.
    pub fn validate(&self) -> Result<()> {
        let t = &self.task;
        if t.features == 0 || t.classes < 2 {
            return Err(config_error("task needs at least one feature and two classes"));
        }
        if t.samples_per_client.is_empty() || t.samples_per_client.contains(&0) {
            return Err(config_error("every client needs at least one sample"));
        }
        if !(t.separation.is_finite() && t.separation >= 0.0) {
            return Err(config_error("separation must be finite and non-negative"));
        }
        let tr = &self.training;
        if !(tr.learning_rate.is_finite() && tr.learning_rate > 0.0) {
            return Err(config_error("learning rate must be positive"));
        }
        if !(tr.init_scale.is_finite() && tr.init_scale >= 0.0) {
            return Err(config_error("init_scale must be finite and non-negative"));
        }
        let m = self.clients();
        match self.protocol {
            ProtocolKind::Plain => {}
            ProtocolKind::Css => self.css_config().validate().map_err(|e| config_error(e.to_string()))?,
            ProtocolKind::CssQuantum => {
                self.css_config().validate().map_err(|e| config_error(e.to_string()))?;
                if self.css.shots == 0 {
                    return Err(config_error("css.shots must be positive"));
                }
                let width = 2 * index_qubits(m) + 1;
                if width > DEFAULT_QUBIT_CAP {
                    return Err(capacity(width));
                }
            }
            ProtocolKind::Bqbc => {
                let b = &self.bqbc;
                if b.l0 == 0 || b.l0 > 30 {
                    return Err(config_error("bqbc.l0 must be in 1..=30"));
                }
                if !(b.epsilon.is_finite() && b.epsilon > 0.0) {
                    return Err(config_error("bqbc.epsilon must be positive"));
                }
                let layout = Layout::new(m, b.l0).map_err(|e| config_error(e.to_string()))?;
                if layout.width() >= DEFAULT_QUBIT_CAP {
                    return Err(capacity(layout.width() + 1));
                }
            }
            ProtocolKind::Ghz => {
                if self.ghz.shots_per_quadrature == 0 {
                    return Err(config_error("ghz.shots_per_quadrature must be positive"));
                }
                if m + 1 > DEFAULT_QUBIT_CAP {
                    return Err(capacity(m + 1));
                }
            }
            ProtocolKind::Sms => {
                if !(1..=30).contains(&self.sms.h) {
                    return Err(config_error("sms.h must be in 1..=30"));
                }
                if self.sms.repetitions == 0 {
                    return Err(config_error("sms.repetitions must be positive"));
                }
            }
        }
        if self.decoy.n_d == Some(0) {
            return Err(config_error("decoy.n_d must be positive when set"));
        }
        Ok(())
    }

    /// Checks specific to `cmd_attack`.
    pub fn validate_attack(&self) -> Result<()> {
        self.validate()?;
        let a = &self.attack;
        if a.trials == 0 {
            return Err(config_error("attack.trials must be positive"));
        }
        let allowed: &[ProtocolKind] = match a.demo {
            AttackDemo::Inversion => &[ProtocolKind::Plain, ProtocolKind::Css],
            AttackDemo::Census => &[ProtocolKind::Plain],
            AttackDemo::BqbcBiased => &[ProtocolKind::Bqbc],
            AttackDemo::GhzPairing => &[ProtocolKind::Ghz],
            AttackDemo::SmsIqft => &[ProtocolKind::Sms],
        };
        if !allowed.contains(&self.protocol) {
            return Err(config_error(format!(
                "attack demo `{}` does not apply to protocol `{}`",
                a.demo.name(),
                self.protocol
            )));
        }
        let m = self.clients();
        match a.demo {
            AttackDemo::Census if a.batch == 0 => Err(config_error("attack.batch must be positive")),
            AttackDemo::BqbcBiased if a.target_client >= m || a.target_bit >= self.bqbc.l0 => {
                Err(config_error("biased-state target outside the bit matrix"))
            }
            AttackDemo::GhzPairing if a.target_client >= m => Err(config_error("pairing target is not a client")),
            AttackDemo::SmsIqft => {
                if a.target_client == 0 || a.target_client >= m {
                    return Err(config_error("the iQFT client must be one of clients 1..m"));
                }
                if self.sms_config().backend() != SmsBackend::Dense {
                    return Err(config_error(format!(
                        "the iQFT demo simulates the ancilla explicitly and needs sms.h <= {}",
                        crate::incremental::DENSE_SMS_QUBITS / 2
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn capacity(requested: usize) -> Error {
    config_error(format!(
        "protocol needs {requested} qubits, above the simulator cap of {DEFAULT_QUBIT_CAP}"
    ))
}
