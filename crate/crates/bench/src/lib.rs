//! Shared fixtures for the criterion benches.

use fedgoal::data::{make_supervised, synthesize_series, SupervisedSet, SynthConfig};
use fedgoal::{LossMatrix, MetricKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `k × k` loss matrix with entries uniform in `[0, 1)`.
pub fn random_loss(k: usize, seed: u64) -> LossMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..k)
        .map(|_| (0..k).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    LossMatrix::new(values, MetricKind::Smape).expect("square and finite")
}

/// Windowed samples from the default synthetic series.
pub fn synthetic_samples(length: usize, lag_count: usize) -> SupervisedSet {
    let series = synthesize_series(&SynthConfig {
        length,
        ..SynthConfig::default()
    })
    .expect("valid synth config");
    make_supervised(&series, lag_count).expect("series longer than lag count")
}
