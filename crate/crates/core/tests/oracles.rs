//! Solver and gradient checks against the brute-force references in `common`.

mod common;

use common::*;
use fedgoal::aggregate::{solve_weights, LossMatrix};
use fedgoal::lp::{solve_lp, LinearProgram, LpStatus};
use fedgoal::metrics::MetricKind;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn simplex_matches_vertex_enumeration() {
    let mut rng = rng(17);
    for case in 0..200 {
        let (c, a, b) = random_feasible_lp(&mut rng);
        let lp = LinearProgram::new(c.clone(), a.clone(), b.clone()).unwrap();
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal, "case {case}");
        let oracle = bfs_minimum(&c, &a, &b).expect("feasible by construction");
        assert!(
            (s.objective_value - oracle).abs() < 1e-7,
            "case {case}: {} vs {oracle}",
            s.objective_value
        );
        assert!(lp.max_residual(&s.x) < 1e-7);
        assert!(s.x.iter().all(|&v| v >= -1e-9));
    }
}

#[test]
fn small_vertex_case() {
    // min -x - y s.t. x + y + s = 1
    let c = vec![-1.0, -1.0, 0.0];
    let a = vec![vec![1.0, 1.0, 1.0]];
    assert_eq!(bfs_minimum(&c, &a, &[1.0]), Some(-1.0));
    let s = solve_lp(&LinearProgram::new(c, a, vec![1.0]).unwrap()).unwrap();
    assert!((s.objective_value + 1.0).abs() < 1e-12);
}

fn random_loss(rng: &mut impl Rng, k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|_| (0..k).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect()
}

#[test]
fn chebyshev_weights_match_grid_search() {
    let mut rng = rng(99);
    for case in 0..40 {
        let k = 2 + case % 2;
        let values = random_loss(&mut rng, k);
        let loss = LossMatrix::new(values.clone(), MetricKind::Smape).unwrap();
        let s = solve_weights(&loss).unwrap();
        let grid = grid_search_lambda(&values, 0.001);
        assert!(
            (s.lambda - grid).abs() < 2e-3,
            "case {case}: {} vs {grid}",
            s.lambda
        );
        // λ is attained by the returned weights and is never beaten by the grid
        assert!((chebyshev_value(&values, &s.alpha) - s.lambda).abs() < 1e-7);
        assert!(s.lambda <= grid + 1e-9);
        assert!(s.max_residual(&loss, &loss.goals()) < 1e-7);
        assert!(s.deltas.iter().all(|d| d.over <= s.lambda + 1e-7));
    }
}

#[test]
fn grid_oracle_hand_cases() {
    assert!(grid_search_lambda(&[vec![2.0, 2.0], vec![1.0, 1.0]], 0.001).abs() < 1e-12);
    assert!((grid_search_lambda(&[vec![1.0, 3.0], vec![3.0, 1.0]], 0.001) - 1.0).abs() < 1e-12);
}

#[test]
fn weak_domination_gives_zero_lambda() {
    let mut rng = rng(5);
    for _ in 0..50 {
        let k = rng.random_range(2..6usize);
        let best = rng.random_range(0..k);
        let mut values = random_loss(&mut rng, k);
        for j in 0..k {
            if j != best {
                let best_row = values[best].clone();
                for (v, b) in values[j].iter_mut().zip(best_row) {
                    *v = v.max(b);
                }
            }
        }
        let loss = LossMatrix::new(values.clone(), MetricKind::Mae).unwrap();
        let s = solve_weights(&loss).unwrap();
        assert!(s.lambda.abs() < 1e-9);
        assert!(chebyshev_value(&values, &s.alpha) < 1e-9);
    }
}

#[test]
fn permuting_models_permutes_weights() {
    let mut rng = rng(21);
    for _ in 0..30 {
        let k = 3;
        let values = random_loss(&mut rng, k);
        let perm = [2usize, 0, 1];
        let permuted: Vec<Vec<f64>> = (0..k)
            .map(|j| (0..k).map(|s| values[perm[j]][perm[s]]).collect())
            .collect();
        let a = solve_weights(&LossMatrix::new(values.clone(), MetricKind::Mae).unwrap()).unwrap();
        let b =
            solve_weights(&LossMatrix::new(permuted.clone(), MetricKind::Mae).unwrap()).unwrap();
        assert!((a.lambda - b.lambda).abs() < 1e-9);
        // the permuted weights of one solution are optimal for the other
        let mapped: Vec<f64> = (0..k).map(|j| a.alpha[perm[j]]).collect();
        assert!((chebyshev_value(&permuted, &mapped) - b.lambda).abs() < 1e-9);
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = rng(2024);
    for case in 0..50 {
        let (net, batch) = random_network(&mut rng);
        let gap = gradient_gap(&net, &batch);
        assert!(gap < 1e-4, "case {case}: relative error {gap}");
    }
}

#[test]
fn flat_oracle_agrees_with_forward() {
    let mut rng = rng(7);
    for _ in 0..20 {
        let (net, batch) = random_network(&mut rng);
        let flat = FlatNet {
            lags: net.hyperparams.lag_count,
            hidden: net.hyperparams.hidden_units,
            steepness: net.hyperparams.sigmoid_steepness,
        };
        let (mu, sd) = (net.scaler.mean, net.scaler.std);
        for x in batch.inputs() {
            let scaled: Vec<f64> = x.iter().map(|v| (v - mu) / sd).collect();
            let expected = mu + sd * flat.output(&net.flatten(), &scaled);
            assert!((net.forward(x).unwrap() - expected).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn returned_weights_satisfy_program(seed in any::<u64>(), k in 1usize..7) {
        let mut r = rng(seed);
        let values = random_loss(&mut r, k);
        let loss = LossMatrix::new(values, MetricKind::Smape).unwrap();
        let s = solve_weights(&loss).unwrap();
        prop_assert!((s.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-7);
        prop_assert!(s.alpha.iter().all(|&a| a >= 0.0));
        prop_assert!(s.max_residual(&loss, &loss.goals()) < 1e-7);
        prop_assert!(s.deltas.iter().all(|d| d.over <= s.lambda + 1e-7));
    }
}
