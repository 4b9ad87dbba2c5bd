//! Dense softmax classifier trained by federated gradient averaging, plus the
//! closed-form gradient inversion attack against single-sample gradients.
//!
//! Parameters are flattened as the row-major `n x C` weight matrix followed by
//! the `C` biases, giving `d = nC + C`.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Division guard used when inverting gradients.
pub const INVERSION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: usize,
    classes: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(features: usize, classes: usize, samples: Vec<Sample>) -> Result<Self> {
        if features == 0 || classes < 2 {
            return Err(domain("a dataset needs n >= 1 features and C >= 2 classes"));
        }
        for (k, s) in samples.iter().enumerate() {
            if s.x.len() != features {
                return Err(domain(format!("sample {k} has {} features, expected {features}", s.x.len())));
            }
            if s.y >= classes {
                return Err(domain(format!("sample {k} has label {} >= {classes}", s.y)));
            }
        }
        Ok(Self { features, classes, samples })
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One client's local data and aggregation weight.
#[derive(Clone, Debug)]
pub struct ClientShard {
    pub client_id: usize,
    pub data: Dataset,
    pub weight: f64,
}

/// Sample counts `N_i` giving weights `w_i = N_i / N`.
pub fn count_weights(shards: &[ClientShard]) -> Vec<f64> {
    let total: usize = shards.iter().map(|s| s.data.len()).sum();
    shards.iter().map(|s| s.data.len() as f64 / total as f64).collect()
}

/// Isotropic Gaussian class blobs split across clients.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub features: usize,
    pub classes: usize,
    pub samples_per_client: Vec<usize>,
    /// Standard deviation of the class centres; samples have unit variance.
    pub separation: f64,
    pub seed: u64,
}

impl SyntheticTask {
    pub fn generate(&self) -> Result<Vec<ClientShard>> {
        if self.samples_per_client.is_empty() || self.samples_per_client.contains(&0) {
            return Err(domain("every client needs at least one sample"));
        }
        let mut rng = crate::seeded_rng(self.seed);
        let std = Normal::new(0.0, 1.0).expect("unit normal");
        let centres: Vec<Vec<f64>> = (0..self.classes)
            .map(|_| (0..self.features).map(|_| self.separation * std.sample(&mut rng)).collect())
            .collect();
        let total: usize = self.samples_per_client.iter().sum();
        let mut shards = Vec::with_capacity(self.samples_per_client.len());
        for (client_id, &count) in self.samples_per_client.iter().enumerate() {
            let samples = (0..count)
                .map(|_| {
                    let y = rng.random_range(0..self.classes);
                    let x = centres[y].iter().map(|c| c + std.sample(&mut rng)).collect();
                    Sample { x, y }
                })
                .collect();
            shards.push(ClientShard {
                client_id,
                data: Dataset::new(self.features, self.classes, samples)?,
                weight: count as f64 / total as f64,
            });
        }
        Ok(shards)
    }
}

/// Dense-layer weights `W` (`n x C`, row-major) and biases `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub features: usize,
    pub classes: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(features: usize, classes: usize) -> Self {
        Self {
            features,
            classes,
            weights: vec![0.0; features * classes],
            biases: vec![0.0; classes],
        }
    }

    pub fn random<R: Rng + ?Sized>(features: usize, classes: usize, scale: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, scale).expect("positive scale");
        Self {
            features,
            classes,
            weights: (0..features * classes).map(|_| normal.sample(rng)).collect(),
            biases: (0..classes).map(|_| normal.sample(rng)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.features * self.classes + self.classes
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.classes + j]
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.extend_from_slice(&self.biases);
        v
    }

    pub fn from_flat(features: usize, classes: usize, flat: &[f64]) -> Result<Self> {
        let d = features * classes + classes;
        if flat.len() != d {
            return Err(domain(format!("flat parameter vector has length {}, expected {d}", flat.len())));
        }
        Ok(Self {
            features,
            classes,
            weights: flat[..features * classes].to_vec(),
            biases: flat[features * classes..].to_vec(),
        })
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|j| self.biases[j] + x.iter().enumerate().map(|(i, xi)| self.weight(i, j) * xi).sum::<f64>())
            .collect()
    }
}

/// Gradients of the loss with respect to [`ModelParams`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientSet {
    pub features: usize,
    pub classes: usize,
    pub d_weights: Vec<f64>,
    pub d_biases: Vec<f64>,
}

impl GradientSet {
    pub fn d_weight(&self, i: usize, j: usize) -> f64 {
        self.d_weights[i * self.classes + j]
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.d_weights.clone();
        v.extend_from_slice(&self.d_biases);
        v
    }

    pub fn from_flat(features: usize, classes: usize, flat: &[f64]) -> Result<Self> {
        let p = ModelParams::from_flat(features, classes, flat)?;
        Ok(Self {
            features,
            classes,
            d_weights: p.weights,
            d_biases: p.biases,
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            features: self.features,
            classes: self.classes,
            d_weights: self.d_weights.iter().map(|g| g * c).collect(),
            d_biases: self.d_biases.iter().map(|g| g * c).collect(),
        }
    }
}

/// Write flat gradient rows as CSV (`client,g0,g1,...`).
pub fn write_gradients_csv<W: Write>(out: W, rows: &[(usize, GradientSet)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if let Some((_, first)) = rows.first() {
        let mut header = vec!["client".to_string()];
        header.extend((0..first.flat().len()).map(|k| format!("g{k}")));
        w.write_record(&header)?;
    }
    for (client, g) in rows {
        let mut rec = vec![client.to_string()];
        rec.extend(g.flat().iter().map(|v| format!("{v:e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Softmax class probabilities, computed with max-subtraction.
pub fn forward_probs(params: &ModelParams, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != params.features {
        return Err(domain(format!("input has {} features, model expects {}", x.len(), params.features)));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(domain("non-finite input feature"));
    }
    let logits = params.logits(x);
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(domain("non-finite logit; check parameters"));
    }
    Ok(softmax(&logits))
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|o| (o - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean cross-entropy over `batch` and its analytic gradient:
/// `dL/dW_ij = mean (p_j - y_j) x_i`, `dL/db_j = mean (p_j - y_j)`.
pub fn loss_and_grads(params: &ModelParams, batch: &[Sample]) -> Result<(f64, GradientSet)> {
    if batch.is_empty() {
        return Err(domain("empty batch"));
    }
    let (n, c) = (params.features, params.classes);
    let mut dw = vec![0.0; n * c];
    let mut db = vec![0.0; c];
    let mut loss = 0.0;
    for s in batch {
        if s.y >= c {
            return Err(domain(format!("label {} out of range for {c} classes", s.y)));
        }
        let p = forward_probs(params, &s.x)?;
        loss -= p[s.y].max(f64::MIN_POSITIVE).ln();
        for j in 0..c {
            let delta = p[j] - if j == s.y { 1.0 } else { 0.0 };
            db[j] += delta;
            for i in 0..n {
                dw[i * c + j] += delta * s.x[i];
            }
        }
    }
    let inv = 1.0 / batch.len() as f64;
    dw.iter_mut().for_each(|g| *g *= inv);
    db.iter_mut().for_each(|g| *g *= inv);
    Ok((
        loss * inv,
        GradientSet {
            features: n,
            classes: c,
            d_weights: dw,
            d_biases: db,
        },
    ))
}

/// Fraction of samples whose arg-max prediction equals the label.
pub fn accuracy(params: &ModelParams, data: &[Sample]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for s in data {
        let p = forward_probs(params, &s.x)?;
        let pred = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(j, _)| j)
            .unwrap_or(0);
        hits += usize::from(pred == s.y);
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Plain weighted sum `sum_i w_i g_i` of flat client gradients.
pub fn weighted_sum(grads: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    if grads.len() != weights.len() || grads.is_empty() {
        return Err(domain("need one weight per client gradient"));
    }
    let d = grads[0].len();
    let mut out = vec![0.0; d];
    for (g, w) in grads.iter().zip(weights) {
        if g.len() != d {
            return Err(domain("client gradients have different lengths"));
        }
        out.iter_mut().zip(g).for_each(|(o, gi)| *o += w * gi);
    }
    Ok(out)
}

/// Centred representative of `x` modulo `2 pi`, in `(-pi, pi]`.
pub fn wrap_centered(x: f64) -> f64 {
    let r = x.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// `theta - alpha * aggregate`. With `wrap_2pi` the aggregate is first reduced
/// to its centred representative modulo `2 pi`.
pub fn aggregate_update(theta: &ModelParams, aggregate: &[f64], alpha: f64, wrap_2pi: bool) -> Result<ModelParams> {
    if aggregate.len() != theta.dim() {
        return Err(domain(format!(
            "aggregate has length {}, model has {} parameters",
            aggregate.len(),
            theta.dim()
        )));
    }
    let next: Vec<f64> = theta
        .flat()
        .iter()
        .zip(aggregate)
        .map(|(t, g)| t - alpha * if wrap_2pi { wrap_centered(*g) } else { *g })
        .collect();
    ModelParams::from_flat(theta.features, theta.classes, &next)
}

/// Outcome of [`invert_single_sample`].
#[derive(Clone, Debug, PartialEq)]
pub struct Inversion {
    pub x: Vec<f64>,
    pub label: usize,
    /// `false` when the sign pattern was ambiguous and the caller's label was used.
    pub label_inferred: bool,
}

/// Recover the input and label behind a batch-size-one gradient.
///
/// The label is the unique class with a negative bias gradient (`p_y - 1 < 0`);
/// if that pattern is ambiguous `fallback_label` is used. Features come from
/// `x_i = dW_ij / db_j` for the class `j` with the largest `|db_j|`.
pub fn invert_single_sample(grads: &GradientSet, fallback_label: Option<usize>) -> Result<Inversion> {
    let (n, c) = (grads.features, grads.classes);
    let (pivot, pivot_mag) = grads
        .d_biases
        .iter()
        .enumerate()
        .map(|(j, g)| (j, g.abs()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| domain("gradient has no classes"))?;
    if pivot_mag <= INVERSION_TOLERANCE {
        return Err(Error::InversionInfeasible {
            tolerance: INVERSION_TOLERANCE,
        });
    }
    let negatives: Vec<usize> = (0..c).filter(|&j| grads.d_biases[j] < 0.0).collect();
    let (label, label_inferred) = match (negatives.as_slice(), fallback_label) {
        ([j], _) => (*j, true),
        (_, Some(y)) if y < c => (y, false),
        _ => {
            return Err(domain("label cannot be inferred from the bias-gradient signs"));
        }
    };
    let db = grads.d_biases[pivot];
    let x = (0..n).map(|i| grads.d_weight(i, pivot) / db).collect();
    Ok(Inversion { x, label, label_inferred })
}

/// Equation/unknown count for the dense-layer inversion problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Census {
    pub equations: usize,
    pub unknowns: usize,
    pub determined: bool,
}

/// `nC + C` gradient equations against `B(n + C)` unknowns.
pub fn batch_equation_census(batch: usize, features: usize, classes: usize) -> Result<Census> {
    if batch == 0 || features == 0 || classes == 0 {
        return Err(domain("census arguments must be positive"));
    }
    let equations = features * classes + classes;
    let unknowns = batch * (features + classes);
    Ok(Census {
        equations,
        unknowns,
        determined: equations >= unknowns,
    })
}

/// Rank-one least-squares fit `dW ≈ x db^T` for batch gradients.
///
/// For `B = 1` this equals the exact inversion; for larger batches it returns
/// a `db`-weighted blend of the batch inputs, with no recovery guarantee.
pub fn least_squares_batch_attempt(grads: &GradientSet) -> Result<Vec<f64>> {
    let norm: f64 = grads.d_biases.iter().map(|g| g * g).sum();
    if norm <= INVERSION_TOLERANCE * INVERSION_TOLERANCE {
        return Err(Error::InversionInfeasible {
            tolerance: INVERSION_TOLERANCE,
        });
    }
    Ok((0..grads.features)
        .map(|i| {
            (0..grads.classes)
                .map(|j| grads.d_weight(i, j) * grads.d_biases[j])
                .sum::<f64>()
                / norm
        })
        .collect())
}
