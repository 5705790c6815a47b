//! Independent reference computations used by the integration and
//! acceptance tests. Apart from the network fixtures at the end, nothing
//! here calls into the code it checks.

#![allow(dead_code)]

use fedgoal::data::SupervisedSet;
use fedgoal::model::{MlpHyperparams, MlpParams, Scaler};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Solves the square system `m · x = b` by Gaussian elimination with partial
/// pivoting; `None` when singular.
pub fn solve_square(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-10 {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            let (upper, lower) = m.split_at_mut(row);
            for (x, p) in lower[0][col..n].iter_mut().zip(&upper[col][col..n]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| m[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / m[row][row];
    }
    Some(x)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Minimum of `c·x` over every basic feasible solution of `A x = b, x ≥ 0`
/// (A of full row rank). `None` when no basis is feasible.
pub fn bfs_minimum(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<f64> {
    let m = a.len();
    let n = c.len();
    let mut best: Option<f64> = None;
    for basis in combinations(n, m) {
        let square = a
            .iter()
            .map(|row| basis.iter().map(|&j| row[j]).collect())
            .collect();
        let Some(xb) = solve_square(square, b.to_vec()) else {
            continue;
        };
        if xb.iter().any(|&v| v < -1e-9) {
            continue;
        }
        let value: f64 = basis.iter().zip(&xb).map(|(&j, v)| c[j] * v).sum();
        best = Some(best.map_or(value, |b: f64| b.min(value)));
    }
    best
}

/// A random LP with `m ≤ n`, feasible by construction (`b = A x₀`, `x₀ ≥ 0`)
/// and bounded because row 0 has strictly positive coefficients.
pub fn random_feasible_lp(rng: &mut impl Rng) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let n = rng.random_range(1..=6usize);
    let m = rng.random_range(1..=4usize.min(n));
    let mut a: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    for v in a[0].iter_mut() {
        *v = rng.random_range(0.1..2.0);
    }
    let x0: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random_bool(0.4) {
                0.0
            } else {
                rng.random_range(0.0..3.0)
            }
        })
        .collect();
    let b = a
        .iter()
        .map(|row| row.iter().zip(&x0).map(|(p, q)| p * q).sum())
        .collect();
    let c = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    (c, a, b)
}

/// Chebyshev overshoot `max_k max(0, Σ_j α_j L[j][k] − L[k][k])`.
pub fn chebyshev_value(loss: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let k = loss.len();
    (0..k)
        .map(|s| {
            let combined: f64 = (0..k).map(|j| alpha[j] * loss[j][s]).sum();
            (combined - loss[s][s]).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// Minimum Chebyshev overshoot over a regular simplex grid with spacing `step`
/// (K = 2 or 3).
pub fn grid_search_lambda(loss: &[Vec<f64>], step: f64) -> f64 {
    let n = (1.0 / step).round() as usize;
    let mut best = f64::INFINITY;
    match loss.len() {
        2 => {
            for i in 0..=n {
                let a = i as f64 / n as f64;
                best = best.min(chebyshev_value(loss, &[a, 1.0 - a]));
            }
        }
        3 => {
            for i in 0..=n {
                for j in 0..=n - i {
                    let a = i as f64 / n as f64;
                    let b = j as f64 / n as f64;
                    best = best.min(chebyshev_value(loss, &[a, b, (1.0 - a - b).max(0.0)]));
                }
            }
        }
        k => panic!("grid oracle supports K = 2 or 3, got {k}"),
    }
    best
}

/// Plain re-statement of the network for the finite-difference oracle:
/// weights flattened as γ (row-major), γ₀, β, β₀.
pub struct FlatNet {
    pub lags: usize,
    pub hidden: usize,
    pub steepness: f64,
}

impl FlatNet {
    pub fn output(&self, w: &[f64], x: &[f64]) -> f64 {
        let (p, d) = (self.lags, self.hidden);
        let gamma = &w[..d * p];
        let gamma0 = &w[d * p..d * p + d];
        let beta = &w[d * p + d..d * p + 2 * d];
        let beta0 = w[d * p + 2 * d];
        let mut out = beta0;
        for j in 0..d {
            let mut z = gamma0[j];
            for i in 0..p {
                z += gamma[j * p + i] * x[i];
            }
            out += beta[j] / (1.0 + (-self.steepness * z).exp());
        }
        out
    }

    /// Mean squared error over normalized rows.
    pub fn mse(&self, w: &[f64], xs: &[Vec<f64>], ys: &[f64]) -> f64 {
        xs.iter()
            .zip(ys)
            .map(|(x, y)| (self.output(w, x) - y).powi(2))
            .sum::<f64>()
            / ys.len() as f64
    }

    /// Central differences with step `h`.
    pub fn numeric_gradient(&self, w: &[f64], xs: &[Vec<f64>], ys: &[f64], h: f64) -> Vec<f64> {
        let mut w = w.to_vec();
        (0..w.len())
            .map(|i| {
                let orig = w[i];
                w[i] = orig + h;
                let up = self.mse(&w, xs, ys);
                w[i] = orig - h;
                let down = self.mse(&w, xs, ys);
                w[i] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }
}

/// `|a − b| / max(|a|, |b|, floor)`; the floor keeps near-zero components
/// from dividing rounding noise by zero.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn random_network(rng: &mut impl Rng) -> (MlpParams, SupervisedSet) {
    let p = rng.random_range(1..5usize);
    let d = rng.random_range(1..5usize);
    let hp = MlpHyperparams {
        lag_count: p,
        hidden_units: d,
        sigmoid_steepness: rng.random_range(0.5..2.0),
        ..MlpHyperparams::default()
    };
    let scaler = Scaler {
        mean: rng.random_range(-5.0..5.0),
        std: rng.random_range(0.5..3.0),
    };
    let mut net = MlpParams::zeros(hp, scaler);
    let w: Vec<f64> = (0..d * p + 2 * d + 1)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    net.set_flat(&w);
    // raw values within ±2.5 standard deviations of the scaler mean
    let n = rng.random_range(1..8usize);
    let mut raw = || scaler.mean + scaler.std * rng.random_range(-2.5..2.5);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| raw()).collect()).collect();
    let targets = (0..n).map(|_| raw()).collect();
    (net, SupervisedSet::from_rows(&rows, targets).unwrap())
}

/// Worst relative error between the analytic gradient and central differences.
pub fn gradient_gap(net: &MlpParams, batch: &SupervisedSet) -> f64 {
    let flat = FlatNet {
        lags: net.hyperparams.lag_count,
        hidden: net.hyperparams.hidden_units,
        steepness: net.hyperparams.sigmoid_steepness,
    };
    let (mu, sd) = (net.scaler.mean, net.scaler.std);
    let xs: Vec<Vec<f64>> = batch
        .inputs()
        .map(|r| r.iter().map(|v| (v - mu) / sd).collect())
        .collect();
    let ys: Vec<f64> = batch.targets().iter().map(|v| (v - mu) / sd).collect();
    let numeric = flat.numeric_gradient(&net.flatten(), &xs, &ys, 1e-5);
    let analytic = net.gradient(batch).unwrap().flatten();
    assert_eq!(numeric.len(), analytic.len());
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(*a, *n, 1e-6))
        .fold(0.0, f64::max)
}
