//! Dense solvers for the two dispatch subproblems: a linear program with
//! bounded variables and a convex quadratic program minimising a sum of
//! squares over a subset of the variables.
//!
//! Both solvers are deterministic: identical inputs always produce identical
//! reports, bit for bit.

mod lp;
mod qp;

pub use lp::solve_lp;
pub use qp::{solve_qp, solve_qp_from};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("malformed problem: {0}")]
    Malformed(String),
}

/// Linear program `min c'x  s.t.  A x <= b,  lower <= x <= upper`.
///
/// Bounds may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedLP {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

/// Quadratic program `min sum_{i in S} x_i^2  s.t.  A x <= b,  lower <= x <= upper`
/// where `S` is given by `squared`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxQP {
    pub squared: Vec<bool>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub x: Vec<f64>,
    /// `+inf` when infeasible, `-inf` when unbounded.
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Largest violation of any row or bound at `x`.
    pub max_violation: f64,
}

impl SolveReport {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Absolute constraint tolerance (problem units, GW for dispatch).
    pub feasibility: f64,
    /// Relative tolerance on reduced costs and multipliers.
    pub optimality: f64,
    pub max_iterations: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-7,
            optimality: 1e-7,
            max_iterations: 100_000,
        }
    }
}

fn check_shape(
    n: usize,
    lower: &[f64],
    upper: &[f64],
    rows: &[Vec<f64>],
    rhs: &[f64],
) -> Result<(), OptimError> {
    let bad = |m: String| Err(OptimError::Malformed(m));
    if lower.len() != n || upper.len() != n {
        return bad(format!("expected {n} bounds"));
    }
    if rows.len() != rhs.len() {
        return bad(format!("{} rows but {} right-hand sides", rows.len(), rhs.len()));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n {
            return bad(format!("row {i} has {} coefficients, expected {n}", r.len()));
        }
        if r.iter().any(|a| !a.is_finite()) || !rhs[i].is_finite() {
            return bad(format!("row {i} is not finite"));
        }
    }
    for j in 0..n {
        if lower[j].is_nan() || upper[j].is_nan() || lower[j] > upper[j] {
            return bad(format!("variable {j} has bounds [{}, {}]", lower[j], upper[j]));
        }
        if lower[j] == f64::INFINITY || upper[j] == f64::NEG_INFINITY {
            return bad(format!("variable {j} has an empty range"));
        }
    }
    Ok(())
}

/// Largest violation of `A x <= b` and the bounds; computed independently of
/// either solver.
pub fn max_violation(lower: &[f64], upper: &[f64], rows: &[Vec<f64>], rhs: &[f64], x: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for (j, &v) in x.iter().enumerate() {
        worst = worst.max(lower[j] - v).max(v - upper[j]);
    }
    for (row, &b) in rows.iter().zip(rhs) {
        worst = worst.max(dot(row, x) - b);
    }
    worst
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl BoundedLP {
    pub fn validate(&self) -> Result<(), OptimError> {
        check_shape(
            self.objective.len(),
            &self.lower,
            &self.upper,
            &self.rows,
            &self.rhs,
        )?;
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(OptimError::Malformed("objective is not finite".into()));
        }
        Ok(())
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        max_violation(&self.lower, &self.upper, &self.rows, &self.rhs, x)
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }
}

impl BoxQP {
    pub fn validate(&self) -> Result<(), OptimError> {
        check_shape(
            self.squared.len(),
            &self.lower,
            &self.upper,
            &self.rows,
            &self.rhs,
        )
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        max_violation(&self.lower, &self.upper, &self.rows, &self.rhs, x)
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.squared)
            .filter(|(_, &s)| s)
            .map(|(v, _)| v * v)
            .sum()
    }

    /// The feasible region of this problem as an LP with zero objective.
    fn feasibility_lp(&self) -> BoundedLP {
        BoundedLP {
            objective: vec![0.0; self.squared.len()],
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            rows: self.rows.clone(),
            rhs: self.rhs.clone(),
        }
    }
}
