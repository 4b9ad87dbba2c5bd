//! Federated training loop with a pluggable aggregation protocol.

use serde::Serialize;

use super::config::{ExperimentConfig, ProtocolKind};
use super::{params_digest, LedgerTotals};
use crate::bqbc::{weighted_sum_via_convolution, ConvolutionConfig};
use crate::channel::{DecoyConfig, DecoyGuard, DecoyStats, EveModel};
use crate::channel::{Channel, Ledger};
use crate::css::{run_classical, run_quantum, Weights};
use crate::error::Result;
use crate::flmodel::{accuracy, aggregate_update, loss_and_grads, weighted_sum, wrap_centered, ClientShard, ModelParams, Sample};
use crate::incremental::{ghz_estimate_sum, sms_run, GhzConfig, SmsAdversary};
use crate::{seeded_rng, SimRng};

/// Stream offsets keep initialisation, protocol randomness and decoys
/// independent of each other for a given seed.
const INIT_STREAM: u64 = 0x1;
const PROTOCOL_STREAM: u64 = 0x2;
const DECOY_STREAM: u64 = 0x3;
const EVE_STREAM: u64 = 0x4;

pub(crate) fn stream(seed: u64, id: u64) -> SimRng {
    seeded_rng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(id))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss: f64,
    pub accuracy: f64,
    /// Largest `|protocol - plain|` over parameters for the aggregate that
    /// produced this iterate; absent for the initial parameters.
    pub max_aggregation_error: Option<f64>,
    /// Largest per-parameter error budget for that aggregate.
    pub error_budget: Option<f64>,
    /// Parameters whose error exceeded their budget.
    pub exceedances: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub config_digest: String,
    pub clients: usize,
    pub parameters: usize,
    pub iterations: usize,
    pub initial_params_digest: String,
    pub final_params_digest: String,
    pub final_params: ModelParams,
    pub final_loss: f64,
    pub final_accuracy: f64,
    pub curve: Vec<IterationRecord>,
    pub max_aggregation_error: f64,
    /// Per-parameter comparisons against the budget, and how many failed.
    pub budget_checks: usize,
    pub budget_exceedances: usize,
    /// The budget is a 3-sigma statistical bound rather than a hard one.
    pub statistical_budget: bool,
    /// Hard budgets: no exceedance. Statistical budgets: at most
    /// [`STATISTICAL_EXCEEDANCE_RATE`] of comparisons exceed.
    pub within_budget: bool,
    /// BQBC gradients clipped into the fixed-point range.
    pub clipped_gradients: usize,
    pub ledger_totals: LedgerTotals,
    pub decoy: Option<DecoyStats>,
    /// Protocol abort that halted the run.
    pub aborted: Option<String>,
    #[serde(skip)]
    pub ledger: Ledger,
}

/// Tolerated fraction of 3-sigma exceedances (nominally 0.27%).
pub const STATISTICAL_EXCEEDANCE_RATE: f64 = 0.01;

struct Aggregate {
    values: Vec<f64>,
    budgets: Vec<f64>,
    clipped: usize,
}

fn is_statistical(cfg: &ExperimentConfig) -> bool {
    match cfg.protocol {
        ProtocolKind::Ghz | ProtocolKind::CssQuantum => true,
        ProtocolKind::Bqbc => !cfg.bqbc.exact,
        _ => false,
    }
}

/// Transposes `m x d` client gradients into per-parameter columns.
fn column(grads: &[Vec<f64>], j: usize) -> Vec<f64> {
    grads.iter().map(|g| g[j]).collect()
}

fn aggregate(
    cfg: &ExperimentConfig,
    grads: &[Vec<f64>],
    counts: &[u64],
    rng: &mut SimRng,
    channel: &mut Channel,
) -> Result<Aggregate> {
    let weights = Weights::from_counts(counts)?;
    let w = weights.as_f64();
    let d = cfg.parameters();
    let m = cfg.clients();
    let frac_step = (-(cfg.css.frac_bits as f64)).exp2();
    match cfg.protocol {
        ProtocolKind::Plain => Ok(Aggregate {
            values: weighted_sum(grads, &w)?,
            budgets: vec![0.0; d],
            clipped: 0,
        }),
        ProtocolKind::Css => Ok(Aggregate {
            values: run_classical(grads, &weights, &cfg.css_config(), rng, channel)?,
            budgets: vec![frac_step; d],
            clipped: 0,
        }),
        ProtocolKind::CssQuantum => {
            let out = run_quantum(grads, &weights, &cfg.css_config(), cfg.css.shots, rng, channel)?;
            Ok(Aggregate {
                values: out.values,
                budgets: out.std_errors.iter().map(|se| 3.0 * se + frac_step).collect(),
                clipped: 0,
            })
        }
        ProtocolKind::Bqbc => {
            let b = &cfg.bqbc;
            let weight_exponent = if w.iter().all(|x| *x < 1.0) { -1 } else { 0 };
            let conv = ConvolutionConfig {
                l0: b.l0,
                weight_exponent,
                gradient_exponent: b.gradient_exponent,
                signed_gradients: true,
                epsilon: b.epsilon,
                exact: b.exact,
                padding: b.padding,
            };
            let limit = (b.gradient_exponent as f64).exp2();
            let weight_step = ((weight_exponent - b.l0 as i32 + 1) as f64).exp2();
            let grad_step = ((b.gradient_exponent - b.l0 as i32 + 1) as f64).exp2();
            let mut values = Vec::with_capacity(d);
            let mut budgets = Vec::with_capacity(d);
            let mut clipped = 0;
            for j in 0..d {
                let col = column(grads, j);
                let mut clip_error = 0.0;
                let safe: Vec<f64> = col
                    .iter()
                    .zip(&w)
                    .map(|(g, wk)| {
                        let bound = limit * (1.0 - f64::EPSILON);
                        if g.abs() >= bound {
                            clipped += 1;
                            clip_error += wk * (g.abs() - bound);
                            g.signum() * bound
                        } else {
                            *g
                        }
                    })
                    .collect();
                let est = weighted_sum_via_convolution(&w, &safe, &conv, rng, channel)?;
                let quantization: f64 = safe.iter().zip(&w).map(|(g, wk)| g.abs() * weight_step + wk * grad_step).sum();
                budgets.push(est.error_bound + quantization + clip_error);
                values.push(est.value);
            }
            Ok(Aggregate { values, budgets, clipped })
        }
        ProtocolKind::Ghz => {
            let gcfg = GhzConfig {
                m,
                shots_per_quadrature: cfg.ghz.shots_per_quadrature,
                distributor: cfg.ghz.distributor,
            };
            let mut values = Vec::with_capacity(d);
            let mut budgets = Vec::with_capacity(d);
            for j in 0..d {
                let phases: Vec<f64> = column(grads, j).iter().zip(&w).map(|(g, wk)| wk * g).collect();
                let est = ghz_estimate_sum(&phases, &gcfg, rng, channel)?;
                values.push(wrap_centered(est.angle));
                budgets.push(3.0 * est.standard_error);
            }
            Ok(Aggregate {
                values,
                budgets,
                clipped: 0,
            })
        }
        ProtocolKind::Sms => {
            let scfg = cfg.sms_config();
            let mut values = Vec::with_capacity(d);
            for j in 0..d {
                let phases: Vec<f64> = column(grads, j).iter().zip(&w).map(|(g, wk)| wk * g).collect();
                let out = sms_run(&phases, &scfg, SmsAdversary::None, rng, channel)?;
                values.push(wrap_centered(out.estimate.angle));
            }
            Ok(Aggregate {
                values,
                budgets: vec![m as f64 * scfg.delta() / 2.0; d],
                clipped: 0,
            })
        }
    }
}

fn evaluate(params: &ModelParams, data: &[Sample]) -> Result<(f64, f64)> {
    let (loss, _) = loss_and_grads(params, data)?;
    Ok((loss, accuracy(params, data)?))
}

fn channel_for(cfg: &ExperimentConfig) -> Channel {
    if !cfg.decoy.enabled {
        return Channel::new();
    }
    let eve = if cfg.decoy.eve {
        EveModel::InterceptResend {
            seed: cfg.seed.wrapping_add(EVE_STREAM),
        }
    } else {
        EveModel::None
    };
    let decoy = DecoyConfig {
        n_d: cfg.decoy.n_d,
        seed: cfg.seed.wrapping_add(DECOY_STREAM),
    };
    Channel::with_guard(DecoyGuard::new(decoy, eve))
}

/// Initial parameters for a configuration.
pub fn initial_params(cfg: &ExperimentConfig) -> ModelParams {
    let mut rng = stream(cfg.seed, INIT_STREAM);
    ModelParams::random(cfg.task.features, cfg.task.classes, cfg.training.init_scale, &mut rng)
}

/// Run `T` federated iterations: local full-shard gradients, protocol
/// aggregation with sample-count weights, `theta <- theta - alpha * agg`.
/// A protocol abort halts the run and is recorded in the report.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let shards: Vec<ClientShard> = cfg.synthetic_task().generate()?;
    let counts: Vec<u64> = shards.iter().map(|s| s.data.len() as u64).collect();
    let everything: Vec<Sample> = shards.iter().flat_map(|s| s.data.samples().iter().cloned()).collect();
    let mut rng = stream(cfg.seed, PROTOCOL_STREAM);
    let mut channel = channel_for(cfg);
    let mut theta = initial_params(cfg);
    let initial_params_digest = params_digest(&theta);
    let wrap = cfg.protocol.is_phase_based();

    let (loss, acc) = evaluate(&theta, &everything)?;
    let mut curve = vec![IterationRecord {
        iteration: 0,
        loss,
        accuracy: acc,
        max_aggregation_error: None,
        error_budget: None,
        exceedances: None,
    }];
    let mut max_err: f64 = 0.0;
    let (mut checks, mut exceeded) = (0usize, 0usize);
    let mut clipped = 0;
    let mut aborted = None;
    for it in 1..=cfg.training.iterations {
        channel.set_round(it as u64);
        let grads: Vec<Vec<f64>> = shards
            .iter()
            .map(|s| loss_and_grads(&theta, s.data.samples()).map(|(_, g)| g.flat()))
            .collect::<Result<_>>()?;
        let agg = match aggregate(cfg, &grads, &counts, &mut rng, &mut channel) {
            Ok(a) => a,
            Err(e) if e.is_protocol_abort() => {
                aborted = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        let reference = weighted_sum(&grads, &shards.iter().map(|s| s.weight).collect::<Vec<_>>())?;
        let errors: Vec<f64> = agg
            .values
            .iter()
            .zip(&reference)
            .map(|(a, p)| if wrap { wrap_centered(a - p).abs() } else { (a - p).abs() })
            .collect();
        let err = errors.iter().copied().fold(0.0, f64::max);
        let over = errors.iter().zip(&agg.budgets).filter(|(e, b)| **e > **b + 1e-12).count();
        max_err = max_err.max(err);
        checks += errors.len();
        exceeded += over;
        clipped += agg.clipped;
        theta = aggregate_update(&theta, &agg.values, cfg.training.learning_rate, wrap)?;
        let (loss, acc) = evaluate(&theta, &everything)?;
        curve.push(IterationRecord {
            iteration: it,
            loss,
            accuracy: acc,
            max_aggregation_error: Some(err),
            error_budget: Some(agg.budgets.iter().copied().fold(0.0, f64::max)),
            exceedances: Some(over),
        });
    }
    let last = curve.last().expect("initial record");
    let statistical_budget = is_statistical(cfg);
    let within_budget = if statistical_budget {
        exceeded as f64 <= STATISTICAL_EXCEEDANCE_RATE * checks as f64
    } else {
        exceeded == 0
    };
    let decoy = channel.guard().map(DecoyGuard::stats);
    let ledger = channel.into_ledger();
    Ok(RunReport {
        protocol: cfg.protocol,
        seed: cfg.seed,
        config_digest: cfg.digest(),
        clients: cfg.clients(),
        parameters: cfg.parameters(),
        iterations: curve.len() - 1,
        initial_params_digest,
        final_params_digest: params_digest(&theta),
        final_loss: last.loss,
        final_accuracy: last.accuracy,
        final_params: theta,
        curve,
        max_aggregation_error: max_err,
        budget_checks: checks,
        budget_exceedances: exceeded,
        statistical_budget,
        within_budget,
        clipped_gradients: clipped,
        ledger_totals: LedgerTotals::of(&ledger),
        decoy,
        aborted,
        ledger,
    })
}
