//! Series ingestion, synthetic load generation, train/test splitting and
//! lag-window construction.

use std::f64::consts::TAU;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeDelta};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of lagged observations per sample (one day of hourly data).
pub const DEFAULT_LAG_COUNT: usize = 24;

/// Timestamp layout used for reading and writing series.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("row {row}: cannot parse timestamp `{text}`")]
    UnparseableTimestamp { row: usize, text: String },
    #[error("row {row}: cannot parse value `{text}`")]
    UnparseableValue { row: usize, text: String },
    #[error("value at index {index} is not finite")]
    NonFiniteValue { index: usize },
    #[error("duplicate timestamp {0}")]
    DuplicateTimestamp(NaiveDateTime),
    #[error("non-uniform spacing at index {index}: expected step {expected}s, found {found}s")]
    NonUniformSpacing {
        index: usize,
        expected: i64,
        found: i64,
    },
    #[error("timestamps and values differ in length ({timestamps} vs {values})")]
    LengthMismatch { timestamps: usize, values: usize },
    #[error("series of length {length} is too short (need more than {required})")]
    SeriesTooShort { length: usize, required: usize },
    #[error("boundary {0} is not strictly inside the series time range")]
    BoundaryOutOfRange(NaiveDateTime),
    #[error("invalid synthetic series config: {0}")]
    InvalidConfig(String),
    #[error("lag count must be at least 1")]
    ZeroLagCount,
}

/// Parses either `YYYY-MM-DDTHH:MM:SS` (a space separator is accepted too)
/// or integer epoch seconds.
pub fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
    let text = text.trim();
    if let Ok(secs) = text.parse::<i64>() {
        return DateTime::from_timestamp(secs, 0).map(|dt| dt.naive_utc());
    }
    NaiveDateTime::parse_from_str(text, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(text, "%Y-%m-%d %H:%M:%S"))
        .ok()
}

pub fn format_timestamp(ts: NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

/// A uniformly spaced univariate series.
///
/// Constructed series are never empty, timestamps strictly increase with a
/// constant step and every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    timestamps: Vec<NaiveDateTime>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(timestamps: Vec<NaiveDateTime>, values: Vec<f64>) -> Result<Self, DataError> {
        if timestamps.len() != values.len() {
            return Err(DataError::LengthMismatch {
                timestamps: timestamps.len(),
                values: values.len(),
            });
        }
        if values.is_empty() {
            return Err(DataError::SeriesTooShort {
                length: 0,
                required: 0,
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteValue { index });
        }
        if timestamps.len() >= 2 {
            let expected = (timestamps[1] - timestamps[0]).num_seconds();
            for (i, pair) in timestamps.windows(2).enumerate() {
                let found = (pair[1] - pair[0]).num_seconds();
                if found == 0 {
                    return Err(DataError::DuplicateTimestamp(pair[1]));
                }
                if found != expected || found < 0 {
                    return Err(DataError::NonUniformSpacing {
                        index: i + 1,
                        expected,
                        found,
                    });
                }
            }
        }
        Ok(Self { timestamps, values })
    }

    /// Hourly series starting at `start`.
    pub fn hourly(start: NaiveDateTime, values: Vec<f64>) -> Result<Self, DataError> {
        let timestamps = (0..values.len())
            .map(|i| start + TimeDelta::hours(i as i64))
            .collect();
        Self::new(timestamps, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn first_timestamp(&self) -> NaiveDateTime {
        self.timestamps[0]
    }

    pub fn last_timestamp(&self) -> NaiveDateTime {
        self.timestamps[self.timestamps.len() - 1]
    }

    /// The last `n` values, or `None` if the series is shorter than that.
    pub fn tail(&self, n: usize) -> Option<&[f64]> {
        self.values.len().checked_sub(n).map(|s| &self.values[s..])
    }
}

/// Reads a series from a headered CSV file.
///
/// When several value columns are given they are summed row by row, which is
/// how zonal load columns are reduced to a single total.
pub fn load_series(
    path: impl AsRef<Path>,
    timestamp_column: &str,
    value_columns: &[&str],
) -> Result<TimeSeries, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_series(file, timestamp_column, value_columns)
}

/// Same as [`load_series`] but over any reader.
pub fn read_series<R: std::io::Read>(
    reader: R,
    timestamp_column: &str,
    value_columns: &[&str],
) -> Result<TimeSeries, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let ts_idx = column(timestamp_column)?;
    if value_columns.is_empty() {
        return Err(DataError::MissingColumn(String::new()));
    }
    let value_idx = value_columns
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let text = record.get(ts_idx).unwrap_or_default();
        let ts = parse_timestamp(text).ok_or_else(|| DataError::UnparseableTimestamp {
            row: row + 1,
            text: text.to_string(),
        })?;
        let mut total = 0.0;
        for &i in &value_idx {
            let text = record.get(i).unwrap_or_default();
            let v: f64 = text.parse().map_err(|_| DataError::UnparseableValue {
                row: row + 1,
                text: text.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFiniteValue { index: row });
            }
            total += v;
        }
        rows.push((ts, total));
    }
    if rows.len() < 2 {
        return Err(DataError::SeriesTooShort {
            length: rows.len(),
            required: 1,
        });
    }
    rows.sort_by_key(|(ts, _)| *ts);
    let (timestamps, values) = rows.into_iter().unzip();
    TimeSeries::new(timestamps, values)
}

/// Writes `timestamp,value` rows.
pub fn write_series<W: std::io::Write>(series: &TimeSeries, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "value"])?;
    for (ts, v) in series.timestamps.iter().zip(&series.values) {
        w.write_record([format_timestamp(*ts), v.to_string()])?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

fn default_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2003, 3, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date")
}

/// Parameters of the synthetic hourly load generator.
///
/// `values[t] = base + trend_slope·t + daily_amplitude·sin(2πt/daily_period)
///  + weekly_amplitude·sin(2πt/weekly_period) + ε_t`, with Gaussian `ε_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub length: usize,
    pub daily_period: usize,
    pub weekly_period: usize,
    pub trend_slope: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub base: f64,
    pub daily_amplitude: f64,
    pub weekly_amplitude: f64,
    pub start: NaiveDateTime,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            length: 5000,
            daily_period: 24,
            weekly_period: 168,
            trend_slope: 0.0,
            noise_std: 0.75,
            seed: 0,
            base: 100.0,
            daily_amplitude: 10.0,
            weekly_amplitude: 5.0,
            start: default_start(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: &str| Err(DataError::InvalidConfig(msg.to_string()));
        if self.length < 2 {
            return bad("length must be at least 2");
        }
        if self.daily_period <= 1 || self.weekly_period <= 1 {
            return bad("periods must exceed 1");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be finite and non-negative");
        }
        let finite = [
            self.trend_slope,
            self.base,
            self.daily_amplitude,
            self.weekly_amplitude,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("coefficients must be finite");
        }
        Ok(())
    }
}

/// Deterministic synthetic load with daily and weekly cycles.
pub fn synthesize_series(config: &SynthConfig) -> Result<TimeSeries, DataError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise =
        Normal::new(0.0, config.noise_std).map_err(|e| DataError::InvalidConfig(e.to_string()))?;
    // Phases are reduced modulo the period so the cycles repeat exactly.
    let cycle = |t: usize, period: usize| (TAU * (t % period) as f64 / period as f64).sin();
    let values = (0..config.length)
        .map(|t| {
            let eps = if config.noise_std > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            config.base
                + config.trend_slope * t as f64
                + config.daily_amplitude * cycle(t, config.daily_period)
                + config.weekly_amplitude * cycle(t, config.weekly_period)
                + eps
        })
        .collect();
    TimeSeries::hourly(config.start, values)
}

/// Splits at `boundary`: the training part keeps every point stamped at or
/// before it.
pub fn split_train_test(
    series: &TimeSeries,
    boundary: NaiveDateTime,
) -> Result<(TimeSeries, TimeSeries), DataError> {
    if boundary < series.first_timestamp() || boundary >= series.last_timestamp() {
        return Err(DataError::BoundaryOutOfRange(boundary));
    }
    let cut = series.timestamps.partition_point(|ts| *ts <= boundary);
    Ok(split_at(series, cut))
}

/// Splits so that the test part holds the final `test_length` points.
pub fn split_last(
    series: &TimeSeries,
    test_length: usize,
) -> Result<(TimeSeries, TimeSeries), DataError> {
    if test_length == 0 || test_length >= series.len() {
        return Err(DataError::SeriesTooShort {
            length: series.len(),
            required: test_length,
        });
    }
    Ok(split_at(series, series.len() - test_length))
}

fn split_at(series: &TimeSeries, cut: usize) -> (TimeSeries, TimeSeries) {
    let train = TimeSeries {
        timestamps: series.timestamps[..cut].to_vec(),
        values: series.values[..cut].to_vec(),
    };
    let test = TimeSeries {
        timestamps: series.timestamps[cut..].to_vec(),
        values: series.values[cut..].to_vec(),
    };
    (train, test)
}

/// Lag windows and next-step targets.
///
/// Row `i` of `inputs` is `values[i..i + p]` and `targets[i] = values[i + p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSet {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    lag_count: usize,
}

impl SupervisedSet {
    /// Builds a set from explicit rows; every row must hold `lag_count` values.
    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<f64>) -> Result<Self, DataError> {
        let lag_count = rows.first().map_or(0, Vec::len);
        if lag_count == 0 {
            return Err(DataError::ZeroLagCount);
        }
        if rows.len() != targets.len() || rows.iter().any(|r| r.len() != lag_count) {
            return Err(DataError::LengthMismatch {
                timestamps: rows.len(),
                values: targets.len(),
            });
        }
        Ok(Self {
            inputs: rows.concat(),
            targets,
            lag_count,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn lag_count(&self) -> usize {
        self.lag_count
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.lag_count..(i + 1) * self.lag_count]
    }

    pub fn inputs(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.inputs.chunks_exact(self.lag_count)
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Samples `range` as a new set.
    pub fn slice(&self, range: std::ops::Range<usize>) -> SupervisedSet {
        let p = self.lag_count;
        SupervisedSet {
            inputs: self.inputs[range.start * p..range.end * p].to_vec(),
            targets: self.targets[range].to_vec(),
            lag_count: p,
        }
    }

    /// Samples at the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> SupervisedSet {
        let mut inputs = Vec::with_capacity(indices.len() * self.lag_count);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.input(i));
            targets.push(self.targets[i]);
        }
        SupervisedSet {
            inputs,
            targets,
            lag_count: self.lag_count,
        }
    }
}

pub fn make_supervised(series: &TimeSeries, lag_count: usize) -> Result<SupervisedSet, DataError> {
    make_supervised_values(series.values(), lag_count)
}

pub fn make_supervised_values(
    values: &[f64],
    lag_count: usize,
) -> Result<SupervisedSet, DataError> {
    if lag_count == 0 {
        return Err(DataError::ZeroLagCount);
    }
    if values.len() <= lag_count {
        return Err(DataError::SeriesTooShort {
            length: values.len(),
            required: lag_count,
        });
    }
    let samples = values.len() - lag_count;
    let mut inputs = Vec::with_capacity(samples * lag_count);
    for window in values.windows(lag_count).take(samples) {
        inputs.extend_from_slice(window);
    }
    Ok(SupervisedSet {
        inputs,
        targets: values[lag_count..].to_vec(),
        lag_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(s: &str) -> NaiveDateTime {
        parse_timestamp(s).unwrap()
    }

    fn csv_series(body: &str) -> Result<TimeSeries, DataError> {
        read_series(body.as_bytes(), "timestamp", &["load"])
    }

    #[test]
    fn loads_three_hourly_rows() {
        let s = csv_series(
            "timestamp,load\n2017-01-01T00:00:00,1\n2017-01-01T01:00:00,2\n2017-01-01T02:00:00,3\n",
        )
        .unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn loader_sorts_rows_and_accepts_epoch_seconds() {
        let s = csv_series("timestamp,load\n7200,3\n0,1\n3600,2\n").unwrap();
        assert_eq!(s.values(), &[1.0, 2.0, 3.0]);
        assert_eq!(s.first_timestamp(), ts("1970-01-01T00:00:00"));
    }

    #[test]
    fn loader_sums_value_columns() {
        let body = "t,a,b\n2017-01-01T00:00:00,1,10\n2017-01-01T01:00:00,2,20\n";
        let s = read_series(body.as_bytes(), "t", &["a", "b"]).unwrap();
        assert_eq!(s.values(), &[11.0, 22.0]);
    }

    #[test]
    fn loader_rejects_gap() {
        let err = csv_series(
            "timestamp,load\n2017-01-01T00:00:00,1\n2017-01-01T01:00:00,2\n2017-01-01T03:00:00,3\n",
        )
        .unwrap_err();
        assert!(matches!(err, DataError::NonUniformSpacing { index: 2, .. }));
    }

    #[test]
    fn loader_rejects_nan() {
        let err = csv_series("timestamp,load\n2017-01-01T00:00:00,1\n2017-01-01T01:00:00,NaN\n")
            .unwrap_err();
        assert!(matches!(err, DataError::NonFiniteValue { .. }));
    }

    #[test]
    fn loader_rejects_duplicates_missing_columns_and_bad_stamps() {
        let dup = csv_series("timestamp,load\n2017-01-01T00:00:00,1\n2017-01-01T00:00:00,2\n");
        assert!(matches!(dup, Err(DataError::DuplicateTimestamp(_))));
        let missing = read_series(
            "timestamp,x\n0,1\n3600,2\n".as_bytes(),
            "timestamp",
            &["load"],
        );
        assert!(matches!(missing, Err(DataError::MissingColumn(c)) if c == "load"));
        let bad = csv_series("timestamp,load\nyesterday,1\n0,2\n");
        assert!(matches!(
            bad,
            Err(DataError::UnparseableTimestamp { row: 1, .. })
        ));
    }

    #[test]
    fn synth_without_variation_is_constant() {
        let cfg = SynthConfig {
            length: 50,
            noise_std: 0.0,
            trend_slope: 0.0,
            daily_amplitude: 0.0,
            weekly_amplitude: 0.0,
            ..SynthConfig::default()
        };
        let s = synthesize_series(&cfg).unwrap();
        assert!(s.values().iter().all(|&v| v == 100.0));
    }

    #[test]
    fn synth_is_deterministic_per_seed() {
        let cfg = SynthConfig {
            length: 300,
            seed: 9,
            ..SynthConfig::default()
        };
        assert_eq!(
            synthesize_series(&cfg).unwrap(),
            synthesize_series(&cfg).unwrap()
        );
        let other = SynthConfig { seed: 10, ..cfg };
        assert_ne!(
            synthesize_series(&other).unwrap().values(),
            synthesize_series(&SynthConfig {
                seed: 9,
                ..other.clone()
            })
            .unwrap()
            .values()
        );
    }

    #[test]
    fn synth_noiseless_full_cycle_shift_equals_trend() {
        // Hand evaluation with periods 3 and 4: the combined cycle is 12 steps,
        // so each value 12 steps later differs only by 12 * slope.
        let cfg = SynthConfig {
            length: 60,
            daily_period: 3,
            weekly_period: 4,
            trend_slope: 0.25,
            noise_std: 0.0,
            ..SynthConfig::default()
        };
        let s = synthesize_series(&cfg).unwrap();
        let v = s.values();
        for t in 0..v.len() - 12 {
            assert!((v[t + 12] - v[t] - 3.0).abs() < 1e-9);
        }
        // t = 1: 100 + 0.25 + 10 sin(2π/3) + 5 sin(π/2)
        let expected = 100.25 + 10.0 * (3f64.sqrt() / 2.0) + 5.0;
        assert!((v[1] - expected).abs() < 1e-12);
    }

    #[test]
    fn synth_rejects_bad_config() {
        let cfg = SynthConfig {
            daily_period: 1,
            ..SynthConfig::default()
        };
        assert!(matches!(
            synthesize_series(&cfg),
            Err(DataError::InvalidConfig(_))
        ));
        let cfg = SynthConfig {
            noise_std: -1.0,
            ..SynthConfig::default()
        };
        assert!(matches!(
            synthesize_series(&cfg),
            Err(DataError::InvalidConfig(_))
        ));
    }

    #[test]
    fn split_counts() {
        let s = TimeSeries::hourly(ts("2017-01-01T00:00:00"), (0..10).map(f64::from).collect())
            .unwrap();
        let (train, test) = split_train_test(&s, s.timestamps()[6]).unwrap();
        assert_eq!((train.len(), test.len()), (7, 3));
        let before = s.first_timestamp() - TimeDelta::hours(1);
        assert!(matches!(
            split_train_test(&s, before),
            Err(DataError::BoundaryOutOfRange(_))
        ));
        assert!(split_train_test(&s, s.last_timestamp()).is_err());
    }

    #[test]
    fn split_calendar_horizon() {
        // Hourly stamps through 2017-04-30T23:00. The final hour of 2016 is
        // stamped at midnight (hour-ending convention), leaving 2879 test steps.
        let start = ts("2016-12-01T00:00:00");
        let end = ts("2017-04-30T23:00:00");
        let n = (end - start).num_hours() as usize + 1;
        let s = TimeSeries::hourly(start, vec![1.0; n]).unwrap();
        let (train, test) = split_train_test(&s, ts("2017-01-01T00:00:00")).unwrap();
        assert_eq!(test.len(), 2879);
        assert_eq!(train.len() + test.len(), n);
    }

    #[test]
    fn supervised_windows() {
        let set = make_supervised_values(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(set.input(0), &[1.0, 2.0]);
        assert_eq!(set.input(1), &[2.0, 3.0]);
        assert_eq!(set.targets(), &[3.0, 4.0]);
        assert!(matches!(
            make_supervised_values(&[1.0; 5], 5),
            Err(DataError::SeriesTooShort { .. })
        ));
        assert_eq!(make_supervised_values(&[0.5; 100], 24).unwrap().len(), 76);
    }

    proptest! {
        #[test]
        fn supervised_round_trip(values in proptest::collection::vec(-1e3f64..1e3, 2..60), p in 1usize..10) {
            prop_assume!(values.len() > p);
            let set = make_supervised_values(&values, p).unwrap();
            prop_assert_eq!(set.len(), values.len() - p);
            let mut rebuilt = values[..p].to_vec();
            rebuilt.extend_from_slice(set.targets());
            prop_assert_eq!(rebuilt, values.clone());
            for (i, row) in set.inputs().enumerate() {
                prop_assert_eq!(row, &values[i..i + p]);
            }
        }

        #[test]
        fn split_partitions_series(n in 3usize..80, cut in 0usize..80) {
            let s = TimeSeries::hourly(ts("2010-01-01T00:00:00"), (0..n).map(|i| i as f64).collect()).unwrap();
            let cut = cut % (n - 1);
            let (train, test) = split_train_test(&s, s.timestamps()[cut]).unwrap();
            prop_assert_eq!(train.len() + test.len(), n);
            prop_assert!(train.last_timestamp() < test.first_timestamp());
            let joined: Vec<f64> = train.values().iter().chain(test.values()).copied().collect();
            prop_assert_eq!(joined, s.values().to_vec());
        }
    }
}
