//! Forecast accuracy metrics. Each one doubles as the loss `L(·)` scored
//! inside the goal program.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("actual and forecast lengths differ ({actual} vs {forecast})")]
    LengthMismatch { actual: usize, forecast: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite input")]
    NonFinite,
    #[error("MASE needs a training reference series")]
    MissingReference,
    #[error("reference series has no one-step variation")]
    DegenerateReference,
    #[error("unknown metric `{0}`")]
    Unknown(String),
}

/// Whether smaller or larger metric values are better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Rmse,
    Mae,
    Mase,
    Smape,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [Self::Rmse, Self::Mae, Self::Mase, Self::Smape];

    pub fn direction(self) -> Direction {
        Direction::Minimize
    }

    pub fn needs_reference(self) -> bool {
        self == Self::Mase
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Rmse => "rmse",
            Self::Mae => "mae",
            Self::Mase => "mase",
            Self::Smape => "smape",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| MetricError::Unknown(s.to_string()))
    }
}

fn check(actual: &[f64], forecast: &[f64]) -> Result<(), MetricError> {
    if actual.len() != forecast.len() {
        return Err(MetricError::LengthMismatch {
            actual: actual.len(),
            forecast: forecast.len(),
        });
    }
    if actual.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    if actual.iter().chain(forecast).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(())
}

fn mean_of(actual: &[f64], forecast: &[f64], term: impl Fn(f64, f64) -> f64) -> f64 {
    let sum: f64 = actual.iter().zip(forecast).map(|(&y, &f)| term(y, f)).sum();
    sum / actual.len() as f64
}

/// Root mean squared error.
pub fn rmse(actual: &[f64], forecast: &[f64]) -> Result<f64, MetricError> {
    check(actual, forecast)?;
    Ok(mean_of(actual, forecast, |y, f| (y - f) * (y - f)).sqrt())
}

/// Mean absolute error.
pub fn mae(actual: &[f64], forecast: &[f64]) -> Result<f64, MetricError> {
    check(actual, forecast)?;
    Ok(mean_of(actual, forecast, |y, f| (y - f).abs()))
}

/// Mean absolute error scaled by the in-sample one-step naive error of
/// `train_reference`, i.e. `Σ|y_t − y_{t−1}| / (T − 1)`.
pub fn mase(actual: &[f64], forecast: &[f64], train_reference: &[f64]) -> Result<f64, MetricError> {
    check(actual, forecast)?;
    if train_reference.len() < 2 {
        return Err(MetricError::DegenerateReference);
    }
    if train_reference.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let naive: f64 = train_reference
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .sum::<f64>()
        / (train_reference.len() - 1) as f64;
    if naive <= 0.0 {
        return Err(MetricError::DegenerateReference);
    }
    Ok(mean_of(actual, forecast, |y, f| (y - f).abs()) / naive)
}

/// Symmetric MAPE as a fraction in `[0, 2]`. A pair with `|y| + |ŷ| = 0`
/// contributes zero.
pub fn smape(actual: &[f64], forecast: &[f64]) -> Result<f64, MetricError> {
    check(actual, forecast)?;
    Ok(mean_of(actual, forecast, |y, f| {
        let denom = (y.abs() + f.abs()) / 2.0;
        if denom == 0.0 {
            0.0
        } else {
            (y - f).abs() / denom
        }
    }))
}

pub fn evaluate(
    kind: MetricKind,
    actual: &[f64],
    forecast: &[f64],
    train_reference: Option<&[f64]>,
) -> Result<f64, MetricError> {
    match kind {
        MetricKind::Rmse => rmse(actual, forecast),
        MetricKind::Mae => mae(actual, forecast),
        MetricKind::Smape => smape(actual, forecast),
        MetricKind::Mase => {
            let reference = train_reference.ok_or(MetricError::MissingReference)?;
            mase(actual, forecast, reference)
        }
    }
}

/// All four metrics for one forecast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub rmse: f64,
    pub mae: f64,
    pub mase: f64,
    pub smape: f64,
}

impl MetricRow {
    /// MASE is NaN when `train_reference` is constant; other errors propagate.
    pub fn compute(
        actual: &[f64],
        forecast: &[f64],
        train_reference: &[f64],
    ) -> Result<Self, MetricError> {
        Ok(Self {
            rmse: rmse(actual, forecast)?,
            mae: mae(actual, forecast)?,
            mase: match mase(actual, forecast, train_reference) {
                Err(MetricError::DegenerateReference) => f64::NAN,
                other => other?,
            },
            smape: smape(actual, forecast)?,
        })
    }

    pub fn get(&self, kind: MetricKind) -> f64 {
        match kind {
            MetricKind::Rmse => self.rmse,
            MetricKind::Mae => self.mae,
            MetricKind::Mase => self.mase,
            MetricKind::Smape => self.smape,
        }
    }

    pub fn is_finite(&self) -> bool {
        MetricKind::ALL.iter().all(|&k| self.get(k).is_finite())
    }
}
