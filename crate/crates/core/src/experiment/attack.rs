//! Attack demonstrations against what each protocol exposes.

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use super::config::{AttackDemo, ExperimentConfig, ProtocolKind};
use super::train::{initial_params, stream};
use crate::bqbc::{malicious_server_attack_demo, AttackReport, BqbcConfig, CountingMode, Layout, ServerBehaviour};
use crate::channel::Channel;
use crate::css::{compute_perturbations, mask_gradient, quantize, PadMatrix, Weights};
use crate::error::{Error, Result};
use crate::flmodel::{
    batch_equation_census, invert_single_sample, least_squares_batch_attempt, loss_and_grads, ClientShard, GradientSet,
    Sample,
};
use crate::incremental::{ghz_malicious_pairing_demo, sms_run, GhzConfig, PairingReport, SmsAdversary};
use crate::SimRng;

const ATTACK_STREAM: u64 = 0x10;

#[derive(Clone, Debug, Serialize)]
pub struct InversionStats {
    pub trials: usize,
    /// Trials where an `x` was produced at all.
    pub reconstructed: usize,
    pub labels_correct: usize,
    /// Largest `|x_hat - x|` over features and reconstructed trials.
    pub max_abs_error: Option<f64>,
    /// Root mean square of the true inputs.
    pub signal_rms: f64,
    /// Root mean square reconstruction error.
    pub error_rms: Option<f64>,
    /// Pearson correlation between reconstructed and true features.
    pub correlation: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CensusRow {
    pub batch: usize,
    pub equations: usize,
    pub unknowns: usize,
    pub determined: bool,
    /// Smallest `max_i |x_hat_i - x_b,i|` over the batch members.
    pub least_squares_error: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttackOutcome {
    Inversion(InversionStats),
    Census { rows: Vec<CensusRow> },
    BqbcBiased {
        index_qubits: usize,
        predicted_detection: f64,
        report: AttackReport,
    },
    GhzPairing {
        unavailable: Option<String>,
        report: Option<PairingReport>,
    },
    SmsIqft {
        trials: usize,
        detected: usize,
        detection_rate: f64,
        predicted_detection: f64,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct AttackSummary {
    pub protocol: ProtocolKind,
    pub demo: AttackDemo,
    pub seed: u64,
    pub config_digest: String,
    pub outcome: AttackOutcome,
}

fn pick_sample<'a>(shards: &'a [ClientShard], rng: &mut SimRng) -> (usize, &'a Sample) {
    let k = rng.random_range(0..shards.len());
    let samples = shards[k].data.samples();
    (k, &samples[rng.random_range(0..samples.len())])
}

/// The server's view of client `k`'s gradient under CSS: its masked upload,
/// centred and rescaled as if it were an ordinary fixed-point gradient.
fn css_view(cfg: &ExperimentConfig, grads: &GradientSet, k: usize, rng: &mut SimRng) -> Result<GradientSet> {
    let css = cfg.css_config();
    let counts: Vec<u64> = cfg.task.samples_per_client.iter().map(|n| *n as u64).collect();
    let weights = Weights::from_counts(&counts)?;
    let r = css.modulus() as f64;
    let scale = (css.frac_bits as f64).exp2();
    let seen: Vec<f64> = grads
        .flat()
        .iter()
        .map(|g| {
            let pads = PadMatrix::sample(css.m, &css, rng);
            let p = compute_perturbations(&pads, &css);
            let y = mask_gradient(quantize(*g, &css, &weights)?, k, &weights, &p[k], &css)? as f64;
            let centred = if y >= r / 2.0 { y - r } else { y };
            Ok(centred / scale)
        })
        .collect::<Result<_>>()?;
    GradientSet::from_flat(grads.features, grads.classes, &seen)
}

fn inversion(cfg: &ExperimentConfig, shards: &[ClientShard], rng: &mut SimRng) -> Result<InversionStats> {
    let theta = initial_params(cfg);
    let trials = cfg.attack.trials;
    let mut stats = InversionStats {
        trials,
        reconstructed: 0,
        labels_correct: 0,
        max_abs_error: None,
        signal_rms: 0.0,
        error_rms: None,
        correlation: None,
    };
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    let (mut signal, mut error, mut count) = (0.0, 0.0, 0usize);
    for _ in 0..trials {
        let (k, s) = pick_sample(shards, rng);
        let (_, grads) = loss_and_grads(&theta, std::slice::from_ref(s))?;
        let seen = match cfg.protocol {
            ProtocolKind::Css => css_view(cfg, &grads, k, rng)?,
            _ => grads,
        };
        signal += s.x.iter().map(|v| v * v).sum::<f64>();
        count += s.x.len();
        let inv = match invert_single_sample(&seen, None) {
            Ok(inv) => inv,
            Err(Error::InversionInfeasible { .. } | Error::Domain(_)) => continue,
            Err(e) => return Err(e),
        };
        stats.reconstructed += 1;
        stats.labels_correct += usize::from(inv.label == s.y);
        let worst = inv.x.iter().zip(&s.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        stats.max_abs_error = Some(stats.max_abs_error.unwrap_or(0.0).max(worst));
        error += inv.x.iter().zip(&s.x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        pairs.extend(inv.x.iter().copied().zip(s.x.iter().copied()));
    }
    stats.correlation = pearson(&pairs);
    stats.signal_rms = (signal / count as f64).sqrt();
    if stats.reconstructed > 0 {
        stats.error_rms = Some((error / (stats.reconstructed * cfg.task.features) as f64).sqrt());
    }
    Ok(stats)
}

fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len() as f64;
    if pairs.len() < 2 {
        return None;
    }
    let (ma, mb) = (pairs.iter().map(|p| p.0).sum::<f64>() / n, pairs.iter().map(|p| p.1).sum::<f64>() / n);
    let cov: f64 = pairs.iter().map(|(a, b)| (a - ma) * (b - mb)).sum();
    let va: f64 = pairs.iter().map(|(a, _)| (a - ma).powi(2)).sum();
    let vb: f64 = pairs.iter().map(|(_, b)| (b - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

fn census(cfg: &ExperimentConfig, shards: &[ClientShard], rng: &mut SimRng) -> Result<Vec<CensusRow>> {
    let theta = initial_params(cfg);
    let (n, c) = (cfg.task.features, cfg.task.classes);
    let pool: Vec<&Sample> = shards.iter().flat_map(|s| s.data.samples()).collect();
    (1..=cfg.attack.batch.min(pool.len()))
        .map(|b| {
            let census = batch_equation_census(b, n, c)?;
            let batch: Vec<Sample> = sample(rng, pool.len(), b).iter().map(|i| pool[i].clone()).collect();
            let (_, grads) = loss_and_grads(&theta, &batch)?;
            let least_squares_error = match least_squares_batch_attempt(&grads) {
                Ok(x_hat) => Some(
                    batch
                        .iter()
                        .map(|s| x_hat.iter().zip(&s.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                        .fold(f64::INFINITY, f64::min),
                ),
                Err(Error::InversionInfeasible { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(CensusRow {
                batch: b,
                equations: census.equations,
                unknowns: census.unknowns,
                determined: census.determined,
                least_squares_error,
            })
        })
        .collect()
}

fn random_bits(m: usize, l0: usize, rng: &mut SimRng) -> Vec<Vec<u8>> {
    (0..m).map(|_| (0..l0).map(|_| rng.random_range(0..2u8)).collect()).collect()
}

/// Run the configured attack demonstration.
pub fn cmd_attack(cfg: &ExperimentConfig) -> Result<AttackSummary> {
    cfg.validate_attack()?;
    let mut rng = stream(cfg.seed, ATTACK_STREAM);
    let m = cfg.clients();
    let a = &cfg.attack;
    let outcome = match a.demo {
        AttackDemo::Inversion => AttackOutcome::Inversion(inversion(cfg, &cfg.synthetic_task().generate()?, &mut rng)?),
        AttackDemo::Census => AttackOutcome::Census {
            rows: census(cfg, &cfg.synthetic_task().generate()?, &mut rng)?,
        },
        AttackDemo::BqbcBiased => {
            let layout = Layout::new(m, cfg.bqbc.l0)?;
            let bq = BqbcConfig {
                padding: cfg.bqbc.padding,
                ..BqbcConfig::new(m, cfg.bqbc.l0, CountingMode::Exact)
            };
            let wa = random_bits(m, cfg.bqbc.l0, &mut rng);
            let gb = random_bits(m, cfg.bqbc.l0, &mut rng);
            let behaviour = ServerBehaviour::Concentrated {
                client: a.target_client,
                bit: a.target_bit,
            };
            AttackOutcome::BqbcBiased {
                index_qubits: layout.index_qubits,
                predicted_detection: 1.0 - (-(layout.index_qubits as f64)).exp2(),
                report: malicious_server_attack_demo(&bq, &wa, &gb, behaviour, a.trials, &mut rng)?,
            }
        }
        AttackDemo::GhzPairing => {
            let gcfg = GhzConfig {
                m,
                shots_per_quadrature: cfg.ghz.shots_per_quadrature,
                distributor: cfg.ghz.distributor,
            };
            let grads: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            match ghz_malicious_pairing_demo(&grads, &gcfg, a.target_client, &mut rng, &mut Channel::new()) {
                Ok(report) => AttackOutcome::GhzPairing {
                    unavailable: None,
                    report: Some(report),
                },
                Err(Error::AttackUnavailable(why)) => AttackOutcome::GhzPairing {
                    unavailable: Some(why),
                    report: None,
                },
                Err(e) => return Err(e),
            }
        }
        AttackDemo::SmsIqft => {
            let scfg = cfg.sms_config();
            let adversary = SmsAdversary::InverseQftAncilla { client: a.target_client };
            let mut detected = 0;
            for _ in 0..a.trials {
                let grads: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
                match sms_run(&grads, &scfg, adversary, &mut rng, &mut Channel::new()) {
                    Ok(_) => {}
                    Err(Error::TamperDetected(_)) => detected += 1,
                    Err(e) => return Err(e),
                }
            }
            AttackOutcome::SmsIqft {
                trials: a.trials,
                detected,
                detection_rate: detected as f64 / a.trials as f64,
                predicted_detection: 1.0 - (-(scfg.h as f64)).exp2(),
            }
        }
    };
    Ok(AttackSummary {
        protocol: cfg.protocol,
        demo: a.demo,
        seed: cfg.seed,
        config_digest: cfg.digest(),
        outcome,
    })
}
