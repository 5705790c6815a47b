//! Ensemble weighting by goal programming over a cross-validation loss matrix.
//!
//! `L[j][k]` is the loss of model `j` on split `k`; the goal for split `k`
//! is the owning model's own loss `g_k = L[k][k]`. The Chebyshev program
//! finds simplex weights `α` minimising the largest overshoot
//!
//! ```text
//! min λ
//!   s.t. δ⁺_k ≤ λ                                  ∀k
//!        Σ_j α_j L[j][k] − δ⁺_k + δ⁻_k = g_k        ∀k
//!        Σ_k α_k = 1,   α, δ⁺, δ⁻ ≥ 0
//! ```
//!
//! For metrics that are maximised the undershoot `δ⁻_k` is the bounded one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SupervisedSet;
use crate::lp::{solve_lp, LinearProgram, LpError, LpStatus};
use crate::metrics::{evaluate, Direction, MetricError, MetricKind};
use crate::model::{predict_recursive, predict_set, Forecaster, ModelError};

/// Slack allowed on `Σα = 1` and `α ≥ 0`.
pub const SIMPLEX_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("malformed loss matrix: {0}")]
    MalformedLossMatrix(String),
    #[error("validation set {0} is empty")]
    EmptyValidationSet(usize),
    #[error("{models} models but {sets} validation sets")]
    CountMismatch { models: usize, sets: usize },
    #[error("MASE needs a training reference series")]
    MissingReference,
    #[error("weights are not on the simplex (sum {sum})")]
    WeightSimplexViolation { sum: f64 },
    #[error("models disagree on lag count")]
    HeterogeneousLagCounts,
    #[error("goal program is {0:?}")]
    Unsolved(LpStatus),
    #[error("invalid weighted goal program config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossMatrix {
    /// `values[j][k]`: model `j` scored on split `k`.
    values: Vec<Vec<f64>>,
    metric: MetricKind,
    direction: Direction,
}

impl LossMatrix {
    pub fn new(values: Vec<Vec<f64>>, metric: MetricKind) -> Result<Self, AggregateError> {
        Self::with_direction(values, metric, metric.direction())
    }

    /// A matrix for a metric scored in the given direction.
    pub fn with_direction(
        values: Vec<Vec<f64>>,
        metric: MetricKind,
        direction: Direction,
    ) -> Result<Self, AggregateError> {
        let k = values.len();
        if k == 0 {
            return Err(AggregateError::MalformedLossMatrix("empty".into()));
        }
        if values.iter().any(|row| row.len() != k) {
            return Err(AggregateError::MalformedLossMatrix("not square".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(AggregateError::MalformedLossMatrix(
                "non-finite entry".into(),
            ));
        }
        Ok(Self {
            values,
            metric,
            direction,
        })
    }

    pub fn size(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, model: usize, split: usize) -> f64 {
        self.values[model][split]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Goals `g_k = L[k][k]`.
    pub fn goals(&self) -> Vec<f64> {
        (0..self.size()).map(|k| self.values[k][k]).collect()
    }

    /// `Σ_j α_j L[j][k]` for every split `k`.
    pub fn combined(&self, alpha: &[f64]) -> Vec<f64> {
        (0..self.size())
            .map(|k| {
                alpha
                    .iter()
                    .zip(&self.values)
                    .map(|(a, row)| a * row[k])
                    .sum()
            })
            .collect()
    }
}

/// Scores every model on every split with one-step predictions.
pub fn build_loss_matrix<F: Forecaster + Sync>(
    models: &[F],
    validation_sets: &[SupervisedSet],
    metric: MetricKind,
    train_reference: Option<&[f64]>,
) -> Result<LossMatrix, AggregateError> {
    if models.is_empty() || models.len() != validation_sets.len() {
        return Err(AggregateError::CountMismatch {
            models: models.len(),
            sets: validation_sets.len(),
        });
    }
    if metric.needs_reference() && train_reference.is_none() {
        return Err(AggregateError::MissingReference);
    }
    if let Some(k) = validation_sets.iter().position(SupervisedSet::is_empty) {
        return Err(AggregateError::EmptyValidationSet(k));
    }
    let values = models
        .par_iter()
        .map(|model| {
            validation_sets
                .iter()
                .map(|set| {
                    let preds = predict_set(model, set)?;
                    Ok(evaluate(metric, set.targets(), &preds, train_reference)?)
                })
                .collect::<Result<Vec<f64>, AggregateError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    LossMatrix::new(values, metric)
}

/// Over- and under-achievement of one goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub over: f64,
    pub under: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSolution {
    pub alpha: Vec<f64>,
    pub lambda: f64,
    pub deltas: Vec<Deviation>,
    pub metric: MetricKind,
    /// Value of the program's objective (λ, or the weighted deviation sum).
    pub objective: f64,
}

impl GpSolution {
    /// Largest violation of the simplex, goal and λ-bound constraints against `loss`.
    pub fn max_residual(&self, loss: &LossMatrix, goals: &[f64]) -> f64 {
        let combined = loss.combined(&self.alpha);
        let sum = (self.alpha.iter().sum::<f64>() - 1.0).abs();
        let negative = self
            .alpha
            .iter()
            .chain(self.deltas.iter().flat_map(|d| [&d.over, &d.under]))
            .map(|v| (-v).max(0.0))
            .fold(0.0, f64::max);
        let goal = combined
            .iter()
            .zip(&self.deltas)
            .zip(goals)
            .map(|((c, d), g)| (c - d.over + d.under - g).abs())
            .fold(0.0, f64::max);
        sum.max(negative).max(goal)
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(self)
    }
}

/// Column layout of the Chebyshev program.
#[derive(Debug, Clone, Copy)]
pub struct ChebyshevLayout {
    pub k: usize,
}

impl ChebyshevLayout {
    pub fn alpha(&self, j: usize) -> usize {
        j
    }
    pub fn over(&self, k: usize) -> usize {
        self.k + k
    }
    pub fn under(&self, k: usize) -> usize {
        2 * self.k + k
    }
    pub fn lambda(&self) -> usize {
        3 * self.k
    }
    pub fn slack(&self, k: usize) -> usize {
        3 * self.k + 1 + k
    }
    pub fn num_variables(&self) -> usize {
        4 * self.k + 1
    }
}

/// Equality-form program over `[α₁..α_K, δ⁺₁..δ⁺_K, δ⁻₁..δ⁻_K, λ, s₁..s_K]`.
///
/// Rows `0..K` bound the unwanted deviation by λ, rows `K..2K` are the goal
/// constraints and the last row is `Σα = 1`.
pub fn build_chebyshev_gp(loss: &LossMatrix) -> Result<LinearProgram, AggregateError> {
    let k = loss.size();
    let layout = ChebyshevLayout { k };
    let n = layout.num_variables();
    let goals = loss.goals();
    let mut rows = Vec::with_capacity(2 * k + 1);
    let mut rhs = Vec::with_capacity(2 * k + 1);

    for split in 0..k {
        let mut row = vec![0.0; n];
        let bounded = match loss.direction() {
            Direction::Minimize => layout.over(split),
            Direction::Maximize => layout.under(split),
        };
        row[bounded] = 1.0;
        row[layout.lambda()] = -1.0;
        row[layout.slack(split)] = 1.0;
        rows.push(row);
        rhs.push(0.0);
    }
    for (split, &goal) in goals.iter().enumerate() {
        let mut row = vec![0.0; n];
        for model in 0..k {
            row[layout.alpha(model)] = loss.get(model, split);
        }
        row[layout.over(split)] = -1.0;
        row[layout.under(split)] = 1.0;
        rows.push(row);
        rhs.push(goal);
    }
    let mut simplex = vec![0.0; n];
    simplex[..k].fill(1.0);
    rows.push(simplex);
    rhs.push(1.0);

    let mut objective = vec![0.0; n];
    objective[layout.lambda()] = 1.0;
    Ok(LinearProgram::new(objective, rows, rhs)?)
}

fn clean(v: f64) -> f64 {
    if v < 0.0 && v > -SIMPLEX_TOLERANCE {
        0.0
    } else {
        v
    }
}

/// Chebyshev goal program weights.
pub fn solve_weights(loss: &LossMatrix) -> Result<GpSolution, AggregateError> {
    let lp = build_chebyshev_gp(loss)?;
    let solution = solve_lp(&lp)?;
    if solution.status != LpStatus::Optimal {
        return Err(AggregateError::Unsolved(solution.status));
    }
    let layout = ChebyshevLayout { k: loss.size() };
    let x = &solution.x;
    let k = loss.size();
    Ok(GpSolution {
        alpha: (0..k).map(|j| clean(x[layout.alpha(j)])).collect(),
        lambda: clean(x[layout.lambda()]),
        deltas: (0..k)
            .map(|s| Deviation {
                over: clean(x[layout.over(s)]),
                under: clean(x[layout.under(s)]),
            })
            .collect(),
        metric: loss.metric(),
        objective: solution.objective_value,
    })
}

/// Goals and deviation weights for the weighted (sum) goal program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedGpConfig {
    pub goals: Vec<f64>,
    pub weights_over: Vec<f64>,
    pub weights_under: Vec<f64>,
}

impl WeightedGpConfig {
    /// Diagonal goals with unit penalty on the unwanted deviation only.
    pub fn from_loss(loss: &LossMatrix) -> Self {
        let k = loss.size();
        let (over, under) = match loss.direction() {
            Direction::Minimize => (1.0, 0.0),
            Direction::Maximize => (0.0, 1.0),
        };
        Self {
            goals: loss.goals(),
            weights_over: vec![over; k],
            weights_under: vec![under; k],
        }
    }

    fn validate(&self, k: usize) -> Result<(), AggregateError> {
        if self.goals.len() != k || self.weights_over.len() != k || self.weights_under.len() != k {
            return Err(AggregateError::InvalidConfig(format!(
                "lengths must equal {k}"
            )));
        }
        let weights = self.weights_over.iter().chain(&self.weights_under);
        if weights.clone().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(AggregateError::InvalidConfig(
                "weights must be finite and >= 0".into(),
            ));
        }
        if self.goals.iter().any(|g| !g.is_finite()) {
            return Err(AggregateError::InvalidConfig("goals must be finite".into()));
        }
        Ok(())
    }
}

/// Weighted goal program `min Σ_k w⁺_k δ⁺_k + w⁻_k δ⁻_k` over the same goal
/// and simplex constraints. The reported `lambda` is the largest unwanted
/// deviation, for comparison with the Chebyshev weights.
pub fn solve_weighted_gp(
    loss: &LossMatrix,
    config: &WeightedGpConfig,
) -> Result<GpSolution, AggregateError> {
    let k = loss.size();
    config.validate(k)?;
    let n = 3 * k;
    let mut rows = Vec::with_capacity(k + 1);
    let mut rhs = Vec::with_capacity(k + 1);
    for split in 0..k {
        let mut row = vec![0.0; n];
        for (model, cell) in row[..k].iter_mut().enumerate() {
            *cell = loss.get(model, split);
        }
        row[k + split] = -1.0;
        row[2 * k + split] = 1.0;
        rows.push(row);
        rhs.push(config.goals[split]);
    }
    let mut simplex = vec![0.0; n];
    simplex[..k].fill(1.0);
    rows.push(simplex);
    rhs.push(1.0);
    let mut objective = vec![0.0; k];
    objective.extend(&config.weights_over);
    objective.extend(&config.weights_under);

    let solution = solve_lp(&LinearProgram::new(objective, rows, rhs)?)?;
    if solution.status != LpStatus::Optimal {
        return Err(AggregateError::Unsolved(solution.status));
    }
    let x = &solution.x;
    let deltas: Vec<Deviation> = (0..k)
        .map(|s| Deviation {
            over: clean(x[k + s]),
            under: clean(x[2 * k + s]),
        })
        .collect();
    let lambda = deltas
        .iter()
        .map(|d| match loss.direction() {
            Direction::Minimize => d.over,
            Direction::Maximize => d.under,
        })
        .fold(0.0, f64::max);
    Ok(GpSolution {
        alpha: x[..k].iter().copied().map(clean).collect(),
        lambda,
        deltas,
        metric: loss.metric(),
        objective: solution.objective_value,
    })
}

/// A convex combination of forecasters sharing one lag count.
#[derive(Debug, Clone)]
pub struct Ensemble<'a, F> {
    models: &'a [F],
    alpha: &'a [f64],
    lag_count: usize,
}

impl<'a, F: Forecaster> Ensemble<'a, F> {
    pub fn new(models: &'a [F], alpha: &'a [f64]) -> Result<Self, AggregateError> {
        if models.is_empty() || models.len() != alpha.len() {
            return Err(AggregateError::CountMismatch {
                models: models.len(),
                sets: alpha.len(),
            });
        }
        let sum: f64 = alpha.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE
            || alpha.iter().any(|a| a.is_nan() || *a < -SIMPLEX_TOLERANCE)
        {
            return Err(AggregateError::WeightSimplexViolation { sum });
        }
        let lag_count = models[0].lag_count();
        if models.iter().any(|m| m.lag_count() != lag_count) {
            return Err(AggregateError::HeterogeneousLagCounts);
        }
        Ok(Self {
            models,
            alpha,
            lag_count,
        })
    }
}

impl<F: Forecaster> Forecaster for Ensemble<'_, F> {
    fn lag_count(&self) -> usize {
        self.lag_count
    }

    fn predict_next(&self, window: &[f64]) -> Result<f64, ModelError> {
        let mut total = 0.0;
        for (model, &a) in self.models.iter().zip(self.alpha) {
            if a != 0.0 {
                total += a * model.predict_next(window)?;
            }
        }
        Ok(total)
    }
}

/// Recursive forecast of the weighted ensemble; the combined value is what
/// enters the shared lag window.
pub fn ensemble_predict<F: Forecaster>(
    models: &[F],
    alpha: &[f64],
    history: &[f64],
    horizon: usize,
) -> Result<Vec<f64>, AggregateError> {
    let ensemble = Ensemble::new(models, alpha)?;
    Ok(predict_recursive(&ensemble, history, horizon)?)
}
