//! Single-hidden-layer perceptron used as the local learner.
//!
//! `f(x) = β₀ + Σ_j β_j · G(γ_j0 + Σ_i γ_ji · x̃_i)` with the logistic
//! activation `G(z) = 1 / (1 + e^{−a·z})` and an identity output map. Inputs
//! and targets are z-scored with the training targets' mean and standard
//! deviation; [`MlpParams::forward`] takes and returns original-scale values.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{SupervisedSet, DEFAULT_LAG_COUNT};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("input contains a non-finite value")]
    NonFiniteInput,
    #[error("{samples} samples cannot fill a batch of {batch_size}")]
    InsufficientData { samples: usize, batch_size: usize },
    #[error("training diverged at epoch {epoch}")]
    DivergedTraining { epoch: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Anything that maps a lag window to a one-step-ahead value.
pub trait Forecaster {
    fn lag_count(&self) -> usize;

    /// One-step prediction from the `lag_count()` most recent values, oldest first.
    fn predict_next(&self, window: &[f64]) -> Result<f64, ModelError>;
}

impl<F: Forecaster + ?Sized> Forecaster for &F {
    fn lag_count(&self) -> usize {
        (**self).lag_count()
    }

    fn predict_next(&self, window: &[f64]) -> Result<f64, ModelError> {
        (**self).predict_next(window)
    }
}

/// Iterated one-step forecasting: each prediction is appended to the lag
/// window used for the next step.
pub fn predict_recursive<F: Forecaster + ?Sized>(
    model: &F,
    history: &[f64],
    horizon: usize,
) -> Result<Vec<f64>, ModelError> {
    let p = model.lag_count();
    if history.len() != p {
        return Err(ModelError::DimensionMismatch {
            expected: p,
            found: history.len(),
        });
    }
    if horizon == 0 {
        return Err(ModelError::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    let mut buf = history.to_vec();
    buf.reserve(horizon);
    for h in 0..horizon {
        let next = model.predict_next(&buf[h..h + p])?;
        buf.push(next);
    }
    Ok(buf.split_off(p))
}

/// One-step predictions for every row of `data`.
pub fn predict_set<F: Forecaster + ?Sized>(
    model: &F,
    data: &SupervisedSet,
) -> Result<Vec<f64>, ModelError> {
    data.inputs().map(|x| model.predict_next(x)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpHyperparams {
    pub lag_count: usize,
    pub hidden_units: usize,
    /// Steepness `a` of the logistic activation.
    pub sigmoid_steepness: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpHyperparams {
    fn default() -> Self {
        Self {
            lag_count: DEFAULT_LAG_COUNT,
            hidden_units: 8,
            sigmoid_steepness: 1.0,
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl MlpHyperparams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::InvalidHyperparams(msg.to_string()));
        if self.lag_count == 0 || self.hidden_units == 0 {
            return bad("lag_count and hidden_units must be at least 1");
        }
        if !(self.sigmoid_steepness > 0.0 && self.sigmoid_steepness.is_finite()) {
            return bad("sigmoid_steepness must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1");
        }
        Ok(())
    }
}

/// Mean and standard deviation used to z-score inputs and targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: f64,
    pub std: f64,
}

impl Scaler {
    pub const IDENTITY: Scaler = Scaler {
        mean: 0.0,
        std: 1.0,
    };

    /// Population statistics of `values`. A spread below `1e-8` falls back to
    /// unit scale so constant series stay representable.
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        Self {
            mean,
            std: if std < 1e-8 { 1.0 } else { std },
        }
    }

    #[inline]
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    #[inline]
    pub fn denormalize(&self, v: f64) -> f64 {
        self.mean + self.std * v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// `γ_ji`, one row of `p` weights per hidden unit.
    pub input_weights: Vec<Vec<f64>>,
    /// `γ_j0`
    pub input_biases: Vec<f64>,
    /// `β_j`
    pub output_weights: Vec<f64>,
    /// `β_0`
    pub output_bias: f64,
    pub scaler: Scaler,
    pub hyperparams: MlpHyperparams,
}

/// Gradient of the normalized-space mean squared error, shaped like [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub input_weights: Vec<Vec<f64>>,
    pub input_biases: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
}

impl MlpGradient {
    fn zeros(hidden: usize, lags: usize) -> Self {
        Self {
            input_weights: vec![vec![0.0; lags]; hidden],
            input_biases: vec![0.0; hidden],
            output_weights: vec![0.0; hidden],
            output_bias: 0.0,
        }
    }

    fn clear(&mut self) {
        self.input_weights
            .iter_mut()
            .flatten()
            .for_each(|v| *v = 0.0);
        self.input_biases.iter_mut().for_each(|v| *v = 0.0);
        self.output_weights.iter_mut().for_each(|v| *v = 0.0);
        self.output_bias = 0.0;
    }

    /// Every component, in the order of [`MlpParams::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.input_weights.iter().flatten().copied().collect();
        out.extend(&self.input_biases);
        out.extend(&self.output_weights);
        out.push(self.output_bias);
        out
    }
}

#[inline]
fn logistic(z: f64, steepness: f64) -> f64 {
    1.0 / (1.0 + (-steepness * z).exp())
}

impl MlpParams {
    /// All-zero weights with the given scaler; predicts `scaler.mean`.
    pub fn zeros(hyperparams: MlpHyperparams, scaler: Scaler) -> Self {
        let d = hyperparams.hidden_units;
        let p = hyperparams.lag_count;
        Self {
            input_weights: vec![vec![0.0; p]; d],
            input_biases: vec![0.0; d],
            output_weights: vec![0.0; d],
            output_bias: 0.0,
            scaler,
            hyperparams,
        }
    }

    fn random(hyperparams: MlpHyperparams, scaler: Scaler, rng: &mut impl Rng) -> Self {
        let d = hyperparams.hidden_units;
        let p = hyperparams.lag_count;
        let mut draw = || rng.random_range(-0.5..=0.5);
        let input_weights = (0..d).map(|_| (0..p).map(|_| draw()).collect()).collect();
        let input_biases = (0..d).map(|_| draw()).collect();
        let output_weights = (0..d).map(|_| draw()).collect();
        let output_bias = draw();
        Self {
            input_weights,
            input_biases,
            output_weights,
            output_bias,
            scaler,
            hyperparams,
        }
    }

    pub fn hidden_units(&self) -> usize {
        self.output_weights.len()
    }

    /// Checks shapes against the echoed hyperparameters and finiteness.
    pub fn validate(&self) -> Result<(), ModelError> {
        let d = self.hyperparams.hidden_units;
        let p = self.hyperparams.lag_count;
        let shapes_ok = self.input_weights.len() == d
            && self.input_weights.iter().all(|r| r.len() == p)
            && self.input_biases.len() == d
            && self.output_weights.len() == d;
        if !shapes_ok {
            return Err(ModelError::InvalidParams(format!(
                "weights do not match {d} hidden units and {p} lags"
            )));
        }
        if !self.flatten().iter().all(|v| v.is_finite())
            || !self.scaler.mean.is_finite()
            || !(self.scaler.std > 0.0 && self.scaler.std.is_finite())
        {
            return Err(ModelError::InvalidParams(
                "non-finite weights or scaler".into(),
            ));
        }
        self.hyperparams.validate()
    }

    /// Weights in a fixed order: `γ` row-major, `γ₀`, `β`, `β₀`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.input_weights.iter().flatten().copied().collect();
        out.extend(&self.input_biases);
        out.extend(&self.output_weights);
        out.push(self.output_bias);
        out
    }

    /// Inverse of [`MlpParams::flatten`].
    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for v in self.input_weights.iter_mut().flatten() {
            *v = it.next().expect("flat vector too short");
        }
        for v in self
            .input_biases
            .iter_mut()
            .chain(self.output_weights.iter_mut())
        {
            *v = it.next().expect("flat vector too short");
        }
        self.output_bias = it.next().expect("flat vector too short");
    }

    /// Network output for an already-normalized input, writing hidden
    /// activations into `hidden`.
    fn forward_normalized(&self, x: &[f64], hidden: &mut [f64]) -> f64 {
        let a = self.hyperparams.sigmoid_steepness;
        let mut out = self.output_bias;
        for (j, h) in hidden.iter_mut().enumerate() {
            let z = self.input_biases[j]
                + self.input_weights[j]
                    .iter()
                    .zip(x)
                    .map(|(w, xi)| w * xi)
                    .sum::<f64>();
            *h = logistic(z, a);
            out += self.output_weights[j] * *h;
        }
        out
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ModelError> {
        let p = self.hyperparams.lag_count;
        if x.len() != p {
            return Err(ModelError::DimensionMismatch {
                expected: p,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteInput);
        }
        Ok(())
    }

    /// Original-scale prediction for an original-scale lag vector.
    pub fn forward(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.check_input(x)?;
        let scaled: Vec<f64> = x.iter().map(|&v| self.scaler.normalize(v)).collect();
        let mut hidden = vec![0.0; self.hidden_units()];
        Ok(self
            .scaler
            .denormalize(self.forward_normalized(&scaled, &mut hidden)))
    }

    /// Adds one sample's squared-error gradient (scaled by `weight`) into
    /// `grad` and returns the squared error.
    fn accumulate(
        &self,
        x: &[f64],
        target: f64,
        weight: f64,
        hidden: &mut [f64],
        grad: &mut MlpGradient,
    ) -> f64 {
        let a = self.hyperparams.sigmoid_steepness;
        let out = self.forward_normalized(x, hidden);
        let err = out - target;
        let g = 2.0 * err * weight;
        grad.output_bias += g;
        for (j, &h) in hidden.iter().enumerate() {
            grad.output_weights[j] += g * h;
            let dz = g * self.output_weights[j] * a * h * (1.0 - h);
            grad.input_biases[j] += dz;
            for (gw, xi) in grad.input_weights[j].iter_mut().zip(x) {
                *gw += dz * xi;
            }
        }
        err * err
    }

    fn check_batch(&self, batch: &SupervisedSet) -> Result<(), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if batch.lag_count() != self.hyperparams.lag_count {
            return Err(ModelError::DimensionMismatch {
                expected: self.hyperparams.lag_count,
                found: batch.lag_count(),
            });
        }
        Ok(())
    }

    /// Gradient of the batch mean squared error in normalized space.
    pub fn gradient(&self, batch: &SupervisedSet) -> Result<MlpGradient, ModelError> {
        self.check_batch(batch)?;
        let p = self.hyperparams.lag_count;
        let mut grad = MlpGradient::zeros(self.hidden_units(), p);
        let mut hidden = vec![0.0; self.hidden_units()];
        let mut scaled = vec![0.0; p];
        let weight = 1.0 / batch.len() as f64;
        for (x, &y) in batch.inputs().zip(batch.targets()) {
            for (s, &v) in scaled.iter_mut().zip(x) {
                *s = self.scaler.normalize(v);
            }
            self.accumulate(
                &scaled,
                self.scaler.normalize(y),
                weight,
                &mut hidden,
                &mut grad,
            );
        }
        Ok(grad)
    }

    /// Mean squared error in normalized space, the quantity [`MlpParams::gradient`] differentiates.
    pub fn normalized_mse(&self, data: &SupervisedSet) -> Result<f64, ModelError> {
        self.check_batch(data)?;
        let p = self.hyperparams.lag_count;
        let mut hidden = vec![0.0; self.hidden_units()];
        let mut scaled = vec![0.0; p];
        let mut total = 0.0;
        for (x, &y) in data.inputs().zip(data.targets()) {
            for (s, &v) in scaled.iter_mut().zip(x) {
                *s = self.scaler.normalize(v);
            }
            let e = self.forward_normalized(&scaled, &mut hidden) - self.scaler.normalize(y);
            total += e * e;
        }
        Ok(total / data.len() as f64)
    }

    pub fn predict_recursive(
        &self,
        history: &[f64],
        horizon: usize,
    ) -> Result<Vec<f64>, ModelError> {
        predict_recursive(self, history, horizon)
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let params: Self = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }
}

impl Forecaster for MlpParams {
    fn lag_count(&self) -> usize {
        self.hyperparams.lag_count
    }

    fn predict_next(&self, window: &[f64]) -> Result<f64, ModelError> {
        self.forward(window)
    }
}

/// Normalized-space training loss before and after optimisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub initial_mse: f64,
    pub final_mse: f64,
}

pub fn train(data: &SupervisedSet, hp: &MlpHyperparams) -> Result<MlpParams, ModelError> {
    train_with_stats(data, hp).map(|(params, _)| params)
}

/// Mini-batch gradient descent on the mean squared error, reshuffling every
/// epoch. Deterministic for a fixed `hp.seed`.
pub fn train_with_stats(
    data: &SupervisedSet,
    hp: &MlpHyperparams,
) -> Result<(MlpParams, TrainingStats), ModelError> {
    hp.validate()?;
    if data.lag_count() != hp.lag_count {
        return Err(ModelError::DimensionMismatch {
            expected: hp.lag_count,
            found: data.lag_count(),
        });
    }
    if data.len() < hp.batch_size {
        return Err(ModelError::InsufficientData {
            samples: data.len(),
            batch_size: hp.batch_size,
        });
    }
    let p = hp.lag_count;
    let scaler = Scaler::fit(data.targets());
    let inputs: Vec<f64> = data
        .inputs()
        .flatten()
        .map(|&v| scaler.normalize(v))
        .collect();
    let targets: Vec<f64> = data
        .targets()
        .iter()
        .map(|&v| scaler.normalize(v))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut params = MlpParams::random(hp.clone(), scaler, &mut rng);
    let mut grad = MlpGradient::zeros(hp.hidden_units, p);
    let mut hidden = vec![0.0; hp.hidden_units];

    let full_mse = |params: &MlpParams, hidden: &mut [f64]| {
        let total: f64 = targets
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let e = params.forward_normalized(&inputs[i * p..(i + 1) * p], hidden) - y;
                e * e
            })
            .sum();
        total / targets.len() as f64
    };
    let initial_mse = full_mse(&params, &mut hidden);

    let mut order: Vec<usize> = (0..targets.len()).collect();
    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hp.batch_size) {
            grad.clear();
            let weight = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            for &i in batch {
                loss += params.accumulate(
                    &inputs[i * p..(i + 1) * p],
                    targets[i],
                    weight,
                    &mut hidden,
                    &mut grad,
                );
            }
            if !loss.is_finite() {
                return Err(ModelError::DivergedTraining { epoch });
            }
            apply_step(&mut params, &grad, hp.learning_rate);
        }
    }
    let final_mse = full_mse(&params, &mut hidden);
    if !final_mse.is_finite() {
        return Err(ModelError::DivergedTraining { epoch: hp.epochs });
    }
    Ok((
        params,
        TrainingStats {
            initial_mse,
            final_mse,
        },
    ))
}

fn apply_step(params: &mut MlpParams, grad: &MlpGradient, lr: f64) {
    for (row, grow) in params.input_weights.iter_mut().zip(&grad.input_weights) {
        for (w, g) in row.iter_mut().zip(grow) {
            *w -= lr * g;
        }
    }
    for (b, g) in params.input_biases.iter_mut().zip(&grad.input_biases) {
        *b -= lr * g;
    }
    for (b, g) in params.output_weights.iter_mut().zip(&grad.output_weights) {
        *b -= lr * g;
    }
    params.output_bias -= lr * grad.output_bias;
}
