//! Dense two-phase primal simplex for `min c·x  s.t.  A·x = b, x ≥ 0`.
//!
//! Entering and leaving variables follow Bland's rule, so the method cannot
//! cycle on degenerate vertices. Set `RUST_LOG=fedgoal::lp=trace` to dump
//! every tableau.

use log::{log_enabled, trace, Level};
use thiserror::Error;

/// Smallest magnitude accepted as a pivot element or an improving reduced cost.
pub const PIVOT_TOLERANCE: f64 = 1e-9;
/// Phase-one objective above which the program is declared infeasible.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("malformed program: {0}")]
    MalformedProgram(String),
    #[error("simplex hit the iteration cap of {0} pivots")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    constraints: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn new(
        objective: Vec<f64>,
        constraints: Vec<Vec<f64>>,
        rhs: Vec<f64>,
    ) -> Result<Self, LpError> {
        let bad = |msg: String| Err(LpError::MalformedProgram(msg));
        let n = objective.len();
        if n == 0 || constraints.is_empty() {
            return bad("need at least one variable and one constraint".into());
        }
        if constraints.len() != rhs.len() {
            return bad(format!(
                "{} constraint rows but {} right-hand sides",
                constraints.len(),
                rhs.len()
            ));
        }
        if let Some(i) = constraints.iter().position(|row| row.len() != n) {
            return bad(format!(
                "row {i} has {} coefficients, expected {n}",
                constraints[i].len()
            ));
        }
        let all = objective
            .iter()
            .chain(rhs.iter())
            .chain(constraints.iter().flatten());
        if all.clone().any(|v| !v.is_finite()) {
            return bad("non-finite coefficient".into());
        }
        Ok(Self {
            objective,
            constraints,
            rhs,
        })
    }

    pub fn num_variables(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Vec<f64>] {
        &self.constraints
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Largest `|A·x − b|` over all rows.
    pub fn max_residual(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .zip(&self.rhs)
            .map(|(row, b)| (dot(row, x) - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal vertex; empty unless `status` is `Optimal`.
    pub x: Vec<f64>,
    /// `c·x` at the optimum; NaN otherwise.
    pub objective_value: f64,
    pub iterations: usize,
}

impl LpSolution {
    fn without_vertex(status: LpStatus, iterations: usize) -> Self {
        Self {
            status,
            x: Vec::new(),
            objective_value: f64::NAN,
            iterations,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

enum Outcome {
    Optimal,
    Unbounded,
}

struct Tableau {
    /// Constraint rows; the last entry of each row is its right-hand side.
    rows: Vec<Vec<f64>>,
    /// Reduced costs; the last entry is minus the current objective value.
    cost: Vec<f64>,
    basis: Vec<usize>,
    iterations: usize,
    limit: usize,
}

impl Tableau {
    fn width(&self) -> usize {
        self.cost.len() - 1
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width();
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rows[r][c] = 1.0;
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (x, p) in row.iter_mut().zip(&pivot_row).take(w + 1) {
                    *x -= f * p;
                }
                row[c] = 0.0;
            }
        }
        let f = self.cost[c];
        if f != 0.0 {
            for (x, p) in self.cost.iter_mut().zip(&pivot_row).take(w + 1) {
                *x -= f * p;
            }
            self.cost[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Rebuilds the reduced-cost row for `costs` under the current basis.
    fn price(&mut self, costs: &[f64]) {
        let w = self.width();
        let mut cost = costs.to_vec();
        cost.push(0.0);
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = costs[b];
            if cb != 0.0 {
                for j in 0..=w {
                    cost[j] -= cb * row[j];
                }
            }
        }
        self.cost = cost;
    }

    fn dump(&self, phase: u8) {
        if log_enabled!(Level::Trace) {
            trace!(
                "phase {phase} iteration {} basis {:?}",
                self.iterations,
                self.basis
            );
            for row in &self.rows {
                trace!("  {row:?}");
            }
            trace!("  cost {:?}", self.cost);
        }
    }

    /// Runs Bland's-rule pivots over columns `0..allowed`.
    fn run(&mut self, allowed: usize, phase: u8) -> Result<Outcome, LpError> {
        let w = self.width();
        loop {
            self.dump(phase);
            let Some(c) = (0..allowed).find(|&j| self.cost[j] < -PIVOT_TOLERANCE) else {
                return Ok(Outcome::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                let a = row[c];
                if a <= PIVOT_TOLERANCE {
                    continue;
                }
                let ratio = row[w] / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((best, best_ratio)) => {
                        let tie = (ratio - best_ratio).abs() <= PIVOT_TOLERANCE;
                        if ratio < best_ratio - PIVOT_TOLERANCE
                            || (tie && self.basis[r] < self.basis[best])
                        {
                            Some((r, ratio))
                        } else {
                            Some((best, best_ratio))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else {
                return Ok(Outcome::Unbounded);
            };
            if self.iterations >= self.limit {
                return Err(LpError::IterationLimit(self.limit));
            }
            self.iterations += 1;
            self.pivot(r, c);
        }
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let n = lp.num_variables();
    let m = lp.num_constraints();
    let limit = 10 * (m + n) * (m + n);

    // Phase one: x plus one artificial per row, rows sign-flipped so b >= 0.
    let width = n + m;
    let rows = lp
        .constraints
        .iter()
        .zip(&lp.rhs)
        .enumerate()
        .map(|(i, (a, &b))| {
            let sign = if b < 0.0 { -1.0 } else { 1.0 };
            let mut row: Vec<f64> = a.iter().map(|v| sign * v).collect();
            row.extend((0..m).map(|k| if k == i { 1.0 } else { 0.0 }));
            row.push(sign * b);
            row
        })
        .collect();
    let mut t = Tableau {
        rows,
        cost: vec![0.0; width + 1],
        basis: (n..n + m).collect(),
        iterations: 0,
        limit,
    };
    let phase_one_costs: Vec<f64> = (0..width).map(|j| if j < n { 0.0 } else { 1.0 }).collect();
    t.price(&phase_one_costs);
    t.run(width, 1)?;
    let infeasibility = -t.cost[width];
    if infeasibility > FEASIBILITY_TOLERANCE {
        return Ok(LpSolution::without_vertex(
            LpStatus::Infeasible,
            t.iterations,
        ));
    }

    // Drive artificials out of the basis; rows where that is impossible are
    // linearly dependent and get dropped.
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] >= n {
            if let Some(c) = (0..n).find(|&j| t.rows[r][j].abs() > PIVOT_TOLERANCE) {
                t.pivot(r, c);
            } else {
                t.rows.remove(r);
                t.basis.remove(r);
                continue;
            }
        }
        r += 1;
    }
    for row in t.rows.iter_mut() {
        let rhs = row[width];
        row.truncate(n);
        row.push(rhs);
    }
    t.cost.truncate(n + 1);
    t.price(&lp.objective);

    match t.run(n, 2)? {
        Outcome::Unbounded => Ok(LpSolution::without_vertex(
            LpStatus::Unbounded,
            t.iterations,
        )),
        Outcome::Optimal => {
            let mut x = vec![0.0; n];
            for (row, &b) in t.rows.iter().zip(&t.basis) {
                x[b] = row[n];
            }
            Ok(LpSolution {
                status: LpStatus::Optimal,
                objective_value: dot(&lp.objective, &x),
                x,
                iterations: t.iterations,
            })
        }
    }
}
