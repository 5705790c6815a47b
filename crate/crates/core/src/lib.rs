//! Federated time-series forecasting with goal-programmed ensembles.
//!
//! A training series is cut into overlapping partitions, one perceptron is
//! trained per partition, every model is scored on every partition, and the
//! resulting loss matrix feeds a Chebyshev goal program whose solution gives
//! convex ensemble weights for the final forecast.

pub mod aggregate;
pub mod data;
pub mod harness;
pub mod lp;
pub mod metrics;
pub mod model;
pub mod partition;

pub use aggregate::{
    build_chebyshev_gp, build_loss_matrix, ensemble_predict, solve_weighted_gp, solve_weights,
    Deviation, Ensemble, GpSolution, LossMatrix, WeightedGpConfig,
};
pub use data::{
    load_series, make_supervised, split_train_test, synthesize_series, SupervisedSet, SynthConfig,
    TimeSeries,
};
pub use lp::{solve_lp, LinearProgram, LpSolution, LpStatus};
pub use metrics::{evaluate, Direction, MetricKind, MetricRow};
pub use model::{predict_recursive, train, Forecaster, MlpHyperparams, MlpParams, Scaler};
pub use partition::{plan_partitions, PartitionConfig, PartitionPlan};
