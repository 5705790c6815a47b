//! Experiment driver: baseline model, split-count × overlap grid, and the
//! CSV/JSON artefacts written from a finished run.

use std::collections::BTreeSet;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{
    build_loss_matrix, solve_weights, AggregateError, Ensemble, GpSolution, LossMatrix,
};
use crate::data::{
    format_timestamp, load_series, make_supervised, split_last, split_train_test,
    synthesize_series, DataError, SupervisedSet, SynthConfig, TimeSeries,
};
use crate::metrics::{evaluate, MetricError, MetricKind, MetricRow};
use crate::model::{
    predict_recursive, predict_set, train_with_stats, MlpHyperparams, MlpParams, ModelError,
    TrainingStats,
};
use crate::partition::{plan_partitions, PartitionConfig, PartitionError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        timestamp_column: String,
        value_columns: Vec<String>,
    },
    Synth(SynthConfig),
}

/// Where the test period starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSplit {
    /// Last training timestamp (inclusive).
    Boundary(NaiveDateTime),
    /// Number of final points held out for testing.
    Horizon(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub k: usize,
    pub overlap: f64,
}

impl GridCell {
    /// File-name tag, e.g. `K10_rho1.0`.
    pub fn tag(&self) -> String {
        format!("K{}_rho{:?}", self.k, self.overlap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub split: TestSplit,
    #[serde(default)]
    pub grid: Vec<GridCell>,
    #[serde(default = "default_metric")]
    pub metric: MetricKind,
    /// `seed` is ignored; partition `k` trains with `master_seed + k`.
    #[serde(default)]
    pub mlp: MlpHyperparams,
    #[serde(default)]
    pub holdout_fraction: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_metric() -> MetricKind {
    MetricKind::Smape
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// Split counts and overlap ratios of the default 3 × 3 grid.
pub const DEFAULT_SPLITS: [usize; 3] = [10, 150, 200];
pub const DEFAULT_OVERLAPS: [f64; 3] = [0.0, 0.5, 1.0];

/// Cartesian product of split counts and overlap ratios.
pub fn grid(splits: &[usize], overlaps: &[f64]) -> Vec<GridCell> {
    splits
        .iter()
        .flat_map(|&k| overlaps.iter().map(move |&overlap| GridCell { k, overlap }))
        .collect()
}

impl ExperimentConfig {
    pub fn synthetic(synth: SynthConfig, test_length: usize, cells: Vec<GridCell>) -> Self {
        Self {
            data: DataSource::Synth(synth),
            split: TestSplit::Horizon(test_length),
            grid: cells,
            metric: default_metric(),
            mlp: MlpHyperparams::default(),
            holdout_fraction: 0.0,
            output_dir: default_output_dir(),
            master_seed: 0,
        }
    }

    /// Reads a `.json` file, or TOML for any other extension.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let config: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        for cell in &self.grid {
            if cell.k == 0 || !(0.0..=1.0).contains(&cell.overlap) {
                return bad(format!(
                    "grid cell K={} rho={} out of range",
                    cell.k, cell.overlap
                ));
            }
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must lie in [0, 1)".into());
        }
        let mut mlp = self.mlp.clone();
        mlp.seed = self.master_seed;
        mlp.validate().or_else(|e| bad(e.to_string()))?;
        match &self.data {
            DataSource::Csv {
                path,
                value_columns,
                ..
            } => {
                if !path.is_file() {
                    return bad(format!("data file {} does not exist", path.display()));
                }
                if value_columns.is_empty() {
                    return bad("value_columns must not be empty".into());
                }
            }
            DataSource::Synth(synth) => synth.validate().or_else(|e| bad(e.to_string()))?,
        }
        if let TestSplit::Horizon(0) = self.split {
            return bad("test horizon must be positive".into());
        }
        Ok(())
    }

    fn hyperparams(&self, samples: usize, partition: usize) -> MlpHyperparams {
        MlpHyperparams {
            seed: self.master_seed.wrapping_add(partition as u64),
            batch_size: self.mlp.batch_size.min(samples).max(1),
            ..self.mlp.clone()
        }
    }
}

/// Series split and windowed once, shared by every run of an experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub train: TimeSeries,
    pub test: TimeSeries,
    pub samples: SupervisedSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub metrics: MetricRow,
    /// Last-observed-value forecast over the same horizon.
    pub naive: MetricRow,
    pub forecast: Vec<f64>,
    pub training: TrainingStats,
}

/// Per-split comparison of the goal program's convex combination of
/// losses with the loss of the combined prediction itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCheck {
    pub combination_of_losses: f64,
    pub loss_of_combination: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: GridCell,
    pub metrics: MetricRow,
    pub solution: GpSolution,
    pub loss: LossMatrix,
    pub ranges: Vec<Range<usize>>,
    pub forecast: Vec<f64>,
    pub split_checks: Vec<SplitCheck>,
    pub training: Vec<TrainingStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellOutcome {
    Ok(Box<CellResult>),
    Failed { cell: GridCell, error: String },
}

impl CellOutcome {
    pub fn cell(&self) -> GridCell {
        match self {
            CellOutcome::Ok(r) => r.cell,
            CellOutcome::Failed { cell, .. } => *cell,
        }
    }

    pub fn result(&self) -> Option<&CellResult> {
        match self {
            CellOutcome::Ok(r) => Some(r),
            CellOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metric: MetricKind,
    pub master_seed: u64,
    pub test_timestamps: Vec<String>,
    pub test_actual: Vec<f64>,
    pub baseline: BaselineResult,
    pub cells: Vec<CellOutcome>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let series = match &config.data {
            DataSource::Csv {
                path,
                timestamp_column,
                value_columns,
            } => {
                let cols: Vec<&str> = value_columns.iter().map(String::as_str).collect();
                load_series(path, timestamp_column, &cols)?
            }
            DataSource::Synth(synth) => synthesize_series(synth)?,
        };
        Self::from_series(config, &series)
    }

    /// Uses an already loaded series instead of `config.data`.
    pub fn from_series(
        config: ExperimentConfig,
        series: &TimeSeries,
    ) -> Result<Self, HarnessError> {
        let (train, test) = match config.split {
            TestSplit::Boundary(ts) => split_train_test(series, ts)?,
            TestSplit::Horizon(h) => split_last(series, h)?,
        };
        if train.len() < 2 {
            return Err(HarnessError::Config(
                "training period needs at least 2 points".into(),
            ));
        }
        let samples = make_supervised(&train, config.mlp.lag_count)?;
        Ok(Self {
            config,
            train,
            test,
            samples,
        })
    }

    fn history(&self) -> &[f64] {
        self.train
            .tail(self.config.mlp.lag_count)
            .expect("training series longer than lag count")
    }

    fn score(&self, forecast: &[f64]) -> Result<MetricRow, HarnessError> {
        Ok(MetricRow::compute(
            self.test.values(),
            forecast,
            self.train.values(),
        )?)
    }

    /// One network on the whole training period, forecast recursively over the test period.
    pub fn run_baseline(&self) -> Result<BaselineResult, HarnessError> {
        let hp = self.config.hyperparams(self.samples.len(), 0);
        let (model, training) = train_with_stats(&self.samples, &hp)?;
        let forecast = predict_recursive(&model, self.history(), self.test.len())?;
        let last = *self.train.values().last().expect("non-empty");
        let naive = vec![last; self.test.len()];
        Ok(BaselineResult {
            metrics: self.score(&forecast)?,
            naive: self.score(&naive)?,
            forecast,
            training,
        })
    }

    /// Train/validation sample sets for one partition range.
    fn local_sets(
        &self,
        range: &Range<usize>,
    ) -> Result<(SupervisedSet, SupervisedSet), HarnessError> {
        let local = self.samples.slice(range.clone());
        let h = self.config.holdout_fraction;
        if h == 0.0 {
            return Ok((local.clone(), local));
        }
        let n = local.len();
        let held = ((h * n as f64).round() as usize).max(1);
        if held >= n {
            return Err(HarnessError::Config(format!(
                "partition of {n} samples too small for holdout fraction {h}"
            )));
        }
        Ok((local.slice(0..n - held), local.slice(n - held..n)))
    }

    pub fn run_cell(&self, cell: GridCell) -> Result<CellResult, HarnessError> {
        let plan = plan_partitions(
            self.samples.len(),
            PartitionConfig::new(cell.k, cell.overlap)?,
        )?;
        let sets = plan
            .ranges
            .iter()
            .map(|r| self.local_sets(r))
            .collect::<Result<Vec<_>, _>>()?;
        let trained = sets
            .par_iter()
            .enumerate()
            .map(|(k, (train_set, _))| {
                train_with_stats(train_set, &self.config.hyperparams(train_set.len(), k))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (models, training): (Vec<MlpParams>, Vec<TrainingStats>) = trained.into_iter().unzip();
        let validation: Vec<SupervisedSet> = sets.into_iter().map(|(_, v)| v).collect();

        let reference = self.train.values();
        let metric = self.config.metric;
        let loss = build_loss_matrix(&models, &validation, metric, Some(reference))?;
        let solution = solve_weights(&loss)?;

        let ensemble = Ensemble::new(&models, &solution.alpha)?;
        let forecast = predict_recursive(&ensemble, self.history(), self.test.len())?;
        let combined = loss.combined(&solution.alpha);
        let split_checks = validation
            .iter()
            .zip(combined)
            .map(|(set, combination_of_losses)| {
                let preds = predict_set(&ensemble, set)?;
                Ok(SplitCheck {
                    combination_of_losses,
                    loss_of_combination: evaluate(metric, set.targets(), &preds, Some(reference))?,
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;

        Ok(CellResult {
            cell,
            metrics: self.score(&forecast)?,
            solution,
            loss,
            ranges: plan.ranges,
            forecast,
            split_checks,
            training,
        })
    }

    /// Baseline plus every grid cell. Failed cells are recorded, not fatal.
    pub fn run(&self) -> Result<ExperimentReport, HarnessError> {
        let baseline = self.run_baseline()?;
        info!("baseline smape {}", baseline.metrics.smape);
        let cells = self
            .config
            .grid
            .par_iter()
            .map(|&cell| match self.run_cell(cell) {
                Ok(r) => {
                    info!("cell {} smape {}", cell.tag(), r.metrics.smape);
                    CellOutcome::Ok(Box::new(r))
                }
                Err(e) => {
                    warn!("cell {} failed: {e}", cell.tag());
                    CellOutcome::Failed {
                        cell,
                        error: e.to_string(),
                    }
                }
            })
            .collect();
        Ok(ExperimentReport {
            metric: self.config.metric,
            master_seed: self.config.master_seed,
            test_timestamps: self
                .test
                .timestamps()
                .iter()
                .map(|t| format_timestamp(*t))
                .collect(),
            test_actual: self.test.values().to_vec(),
            baseline,
            cells,
        })
    }
}

pub fn run_baseline(config: &ExperimentConfig) -> Result<BaselineResult, HarnessError> {
    Experiment::new(config.clone())?.run_baseline()
}

pub fn run_cell(
    config: &ExperimentConfig,
    k: usize,
    overlap: f64,
) -> Result<CellResult, HarnessError> {
    Experiment::new(config.clone())?.run_cell(GridCell { k, overlap })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    Experiment::new(config.clone())?.run()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, HarnessError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn metric_fields(m: &MetricRow) -> [String; 4] {
    [m.rmse, m.mae, m.mase, m.smape].map(|v| v.to_string())
}

/// Writes `report.json`, `table1.csv`, `sensitivity.csv` and, per solved
/// cell, `weights_*.json`, `loss_heatmap_*.csv` and `forecast_*.csv`.
/// Returns the written paths in order.
pub fn emit_outputs(
    report: &ExperimentReport,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, HarnessError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = BTreeSet::new();
    let solved: Vec<&CellResult> = report
        .cells
        .iter()
        .filter_map(CellOutcome::result)
        .collect();

    let path = dir.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(report)?).map_err(io_err(&path))?;
    written.insert(path);

    let path = dir.join("table1.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["split", "overlap", "rmse", "mae", "mase", "smape"])?;
    let mut rows = solved.clone();
    rows.sort_by(|a, b| a.metrics.smape.total_cmp(&b.metrics.smape));
    for r in rows {
        let [rmse, mae, mase, smape] = metric_fields(&r.metrics);
        w.write_record([
            r.cell.k.to_string(),
            format!("{:?}", r.cell.overlap),
            rmse,
            mae,
            mase,
            smape,
        ])?;
    }
    let [rmse, mae, mase, smape] = metric_fields(&report.baseline.metrics);
    w.write_record([
        "baseline".to_string(),
        String::new(),
        rmse,
        mae,
        mase,
        smape,
    ])?;
    w.flush().map_err(io_err(&path))?;
    written.insert(path);

    let path = dir.join("sensitivity.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["k", "rho", "smape"])?;
    for r in &solved {
        w.write_record([
            r.cell.k.to_string(),
            format!("{:?}", r.cell.overlap),
            r.metrics.smape.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(&path))?;
    written.insert(path);

    for r in &solved {
        let tag = r.cell.tag();

        let path = dir.join(format!("weights_{tag}.json"));
        fs::write(&path, r.solution.to_json()?).map_err(io_err(&path))?;
        written.insert(path);

        // rows = splits, columns = models
        let path = dir.join(format!("loss_heatmap_{tag}.csv"));
        let mut w = csv_writer(&path)?;
        let k = r.loss.size();
        let mut header = vec![format!("split\\model ({})", r.loss.metric())];
        header.extend((1..=k).map(|j| format!("M{j}")));
        w.write_record(&header)?;
        for split in 0..k {
            let mut row = vec![format!("S{}", split + 1)];
            row.extend((0..k).map(|model| r.loss.get(model, split).to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(io_err(&path))?;
        written.insert(path);

        let path = dir.join(format!("forecast_{tag}.csv"));
        let mut w = csv_writer(&path)?;
        w.write_record(["timestamp", "actual", "baseline", "ensemble"])?;
        for (i, ts) in report.test_timestamps.iter().enumerate() {
            w.write_record([
                ts.clone(),
                report.test_actual[i].to_string(),
                report.baseline.forecast[i].to_string(),
                r.forecast[i].to_string(),
            ])?;
        }
        w.flush().map_err(io_err(&path))?;
        written.insert(path);
    }
    Ok(written.into_iter().collect())
}
