//! Primal active-set method for `min sum_{i in S} x_i^2` under linear
//! inequalities and bounds.
//!
//! The objective is only positive semidefinite when some variables are not
//! squared. Because it has no linear term, every equality-constrained
//! subproblem still has a minimiser; the non-squared free variables are
//! reduced to a set whose constraint columns are linearly independent, which
//! keeps the KKT system of each subproblem nonsingular without changing the
//! attainable steps in the squared variables.

use nalgebra::{DMatrix, DVector};

use super::{solve_lp, BoxQP, OptimError, SolveReport, SolveStatus, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Bound {
    Lower,
    Upper,
}

/// Dropping candidate: a general row or a variable bound.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Active {
    Row(usize),
    Var(usize),
}

struct ActiveSet<'a> {
    p: &'a BoxQP,
    x: Vec<f64>,
    fixed: Vec<Option<Bound>>,
    /// Variables with equal bounds never leave the working set.
    pinned: Vec<bool>,
    rows: Vec<usize>,
    in_rows: Vec<bool>,
}

struct Subproblem {
    step: Vec<f64>,
    /// Multipliers of the working rows, in `rows` order.
    lambda: Vec<f64>,
}

/// Solves the QP, first finding a feasible point with a phase-one LP.
pub fn solve_qp(p: &BoxQP, tol: &Tolerances) -> Result<SolveReport, OptimError> {
    p.validate()?;
    let start = solve_lp(&p.feasibility_lp(), tol)?;
    match start.status {
        SolveStatus::Optimal => solve_qp_from(p, &start.x, tol),
        SolveStatus::Infeasible => Ok(SolveReport {
            objective: f64::INFINITY,
            ..start
        }),
        _ => Ok(SolveReport {
            objective: p.objective_at(&start.x),
            status: SolveStatus::NumericalFailure,
            ..start
        }),
    }
}

/// Solves the QP starting from a feasible point `x0`.
pub fn solve_qp_from(p: &BoxQP, x0: &[f64], tol: &Tolerances) -> Result<SolveReport, OptimError> {
    p.validate()?;
    let n = p.squared.len();
    if x0.len() != n {
        return Err(OptimError::Malformed(format!(
            "start point has {} entries, expected {n}",
            x0.len()
        )));
    }
    let scale = 1.0 + x0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if p.max_violation(x0) > tol.feasibility * scale {
        return Ok(SolveReport {
            x: x0.to_vec(),
            objective: f64::INFINITY,
            status: SolveStatus::Infeasible,
            iterations: 0,
            max_violation: p.max_violation(x0),
        });
    }

    let mut ws = ActiveSet::new(p, x0, tol.feasibility * scale);
    let mut iterations = 0;
    let mut degenerate = false;
    let status = loop {
        if iterations >= tol.max_iterations {
            break SolveStatus::NumericalFailure;
        }
        iterations += 1;
        let Some(sub) = ws.subproblem() else {
            break SolveStatus::NumericalFailure;
        };
        let xscale = 1.0 + ws.x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let step_norm = sub.step.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if step_norm <= 1e-11 * xscale {
            match ws.most_negative(&sub.lambda, tol.optimality * 2.0 * xscale, degenerate) {
                None => break SolveStatus::Optimal,
                Some(Active::Row(k)) => ws.drop_row(k),
                Some(Active::Var(j)) => ws.fixed[j] = None,
            }
            continue;
        }
        let (alpha, blocking) = ws.ratio_test(&sub.step);
        degenerate = alpha <= 1e-14;
        for (xi, si) in ws.x.iter_mut().zip(&sub.step) {
            *xi += alpha * si;
        }
        match blocking {
            Some(Active::Row(i)) => {
                ws.rows.push(i);
                ws.in_rows[i] = true;
            }
            Some(Active::Var(j)) => {
                let bound = if sub.step[j] > 0.0 {
                    Bound::Upper
                } else {
                    Bound::Lower
                };
                ws.x[j] = match bound {
                    Bound::Upper => p.upper[j],
                    Bound::Lower => p.lower[j],
                };
                ws.fixed[j] = Some(bound);
            }
            None => {}
        }
    };

    let x = ws.x;
    Ok(SolveReport {
        objective: p.objective_at(&x),
        max_violation: p.max_violation(&x),
        x,
        status,
        iterations,
    })
}

impl<'a> ActiveSet<'a> {
    fn new(p: &'a BoxQP, x0: &[f64], feas: f64) -> Self {
        let n = x0.len();
        let mut x = x0.to_vec();
        let mut fixed = vec![None; n];
        let mut pinned = vec![false; n];
        for j in 0..n {
            if p.lower[j] == p.upper[j] {
                pinned[j] = true;
                fixed[j] = Some(Bound::Lower);
                x[j] = p.lower[j];
            } else if x[j] - p.lower[j] <= feas {
                fixed[j] = Some(Bound::Lower);
                x[j] = p.lower[j];
            } else if p.upper[j] - x[j] <= feas {
                fixed[j] = Some(Bound::Upper);
                x[j] = p.upper[j];
            }
        }
        let mut ws = Self {
            p,
            x,
            fixed,
            pinned,
            rows: Vec::new(),
            in_rows: vec![false; p.rows.len()],
        };
        // Active rows, kept only while independent on the free variables.
        let free: Vec<usize> = (0..n).filter(|&j| ws.fixed[j].is_none()).collect();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for (i, row) in p.rows.iter().enumerate() {
            if p.rhs[i] - super::dot(row, &ws.x) > feas {
                continue;
            }
            let v: Vec<f64> = free.iter().map(|&j| row[j]).collect();
            if let Some(u) = orthogonal_remainder(&v, &basis) {
                basis.push(u);
                ws.rows.push(i);
                ws.in_rows[i] = true;
            }
        }
        ws
    }

    fn drop_row(&mut self, k: usize) {
        let i = self.rows.remove(k);
        self.in_rows[i] = false;
    }

    /// Minimises the objective over the working-set manifold through `x`.
    /// Returns `None` if the KKT system cannot be solved.
    fn subproblem(&self) -> Option<Subproblem> {
        let p = self.p;
        let n = self.x.len();
        let sq: Vec<usize> = (0..n)
            .filter(|&j| self.fixed[j].is_none() && p.squared[j])
            .collect();
        let loose: Vec<usize> = (0..n)
            .filter(|&j| self.fixed[j].is_none() && !p.squared[j])
            .collect();
        let r = self.rows.len();
        let mut step = vec![0.0; n];
        if r == 0 {
            for &j in &sq {
                step[j] = -self.x[j];
            }
            return Some(Subproblem {
                step,
                lambda: Vec::new(),
            });
        }

        // Keep a column basis of the non-squared free variables.
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut kept = Vec::new();
        for &j in &loose {
            let col: Vec<f64> = self.rows.iter().map(|&i| p.rows[i][j]).collect();
            if let Some(u) = orthogonal_remainder(&col, &basis) {
                basis.push(u);
                kept.push(j);
            }
        }

        // [ -1/2 A_S A_S'   A_U ] [lambda]   [ A_S x_S ]
        // [  A_U'           0   ] [ p_U  ] = [    0    ]
        let k = kept.len();
        let dim = r + k;
        let mut kkt = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        for (a, &ia) in self.rows.iter().enumerate() {
            let row_a = &p.rows[ia];
            for (b, &ib) in self.rows.iter().enumerate().skip(a) {
                let row_b = &p.rows[ib];
                let m: f64 = sq.iter().map(|&j| row_a[j] * row_b[j]).sum();
                kkt[(a, b)] = -0.5 * m;
                kkt[(b, a)] = -0.5 * m;
            }
            rhs[a] = sq.iter().map(|&j| row_a[j] * self.x[j]).sum();
            for (c, &j) in kept.iter().enumerate() {
                kkt[(a, r + c)] = row_a[j];
                kkt[(r + c, a)] = row_a[j];
            }
        }
        let sol = match kkt.clone().lu().solve(&rhs) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => kkt.svd(true, true).solve(&rhs, 1e-12).ok()?,
        };
        let lambda: Vec<f64> = sol.iter().take(r).copied().collect();
        for &j in &sq {
            let at_lambda: f64 = self
                .rows
                .iter()
                .zip(&lambda)
                .map(|(&i, l)| p.rows[i][j] * l)
                .sum();
            step[j] = -self.x[j] - 0.5 * at_lambda;
        }
        for (c, &j) in kept.iter().enumerate() {
            step[j] = sol[r + c];
        }
        Some(Subproblem { step, lambda })
    }

    /// Most negative multiplier of the working set, or the first negative one
    /// after a degenerate step.
    fn most_negative(&self, lambda: &[f64], tol: f64, first: bool) -> Option<Active> {
        let p = self.p;
        let mut best: Option<(Active, f64)> = None;
        let mut consider = |who: Active, value: f64| {
            if value < -tol && best.map_or(true, |(_, v)| !first && value < v) {
                best = Some((who, value));
            }
        };
        for (k, &l) in lambda.iter().enumerate() {
            consider(Active::Row(k), l);
        }
        for j in 0..self.x.len() {
            let Some(bound) = self.fixed[j] else { continue };
            if self.pinned[j] {
                continue;
            }
            let grad = if p.squared[j] { 2.0 * self.x[j] } else { 0.0 }
                + self
                    .rows
                    .iter()
                    .zip(lambda)
                    .map(|(&i, l)| p.rows[i][j] * l)
                    .sum::<f64>();
            let mu = match bound {
                Bound::Lower => grad,
                Bound::Upper => -grad,
            };
            consider(Active::Var(j), mu);
        }
        best.map(|(who, _)| who)
    }

    /// Longest feasible fraction of `step` (at most one) and the constraint
    /// that blocks it, lowest index first on ties.
    fn ratio_test(&self, step: &[f64]) -> (f64, Option<Active>) {
        let p = self.p;
        let norm = step.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut alpha = 1.0;
        let mut blocking = None;
        for (i, row) in p.rows.iter().enumerate() {
            if self.in_rows[i] {
                continue;
            }
            let slope = super::dot(row, step);
            let row_norm = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if slope <= 1e-12 * row_norm * norm {
                continue;
            }
            let ratio = ((p.rhs[i] - super::dot(row, &self.x)) / slope).max(0.0);
            if ratio < alpha {
                alpha = ratio;
                blocking = Some(Active::Row(i));
            }
        }
        for (j, &s) in step.iter().enumerate() {
            if self.fixed[j].is_some() || s == 0.0 {
                continue;
            }
            let ratio = if s > 0.0 {
                (p.upper[j] - self.x[j]) / s
            } else {
                (p.lower[j] - self.x[j]) / s
            };
            let ratio = ratio.max(0.0);
            if ratio < alpha {
                alpha = ratio;
                blocking = Some(Active::Var(j));
            }
        }
        (alpha, blocking)
    }
}

/// Gram-Schmidt remainder of `v` against an orthonormal `basis`, normalised,
/// or `None` if `v` lies in its span.
fn orthogonal_remainder(v: &[f64], basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    let mut u = v.to_vec();
    // Two passes keep the basis orthogonal to working precision.
    for _ in 0..2 {
        for b in basis {
            let c = super::dot(&u, b);
            for (ui, bi) in u.iter_mut().zip(b) {
                *ui -= c * bi;
            }
        }
    }
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 1e-9 * scale {
        return None;
    }
    for ui in &mut u {
        *ui /= norm;
    }
    Some(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(squared: Vec<bool>, lo: Vec<f64>, hi: Vec<f64>, rows: Vec<Vec<f64>>, rhs: Vec<f64>) -> BoxQP {
        BoxQP {
            squared,
            lower: lo,
            upper: hi,
            rows,
            rhs,
        }
    }

    const INF: f64 = f64::INFINITY;

    #[test]
    fn pinned_by_equality() {
        // F = 1 as two inequalities.
        let p = qp(vec![true], vec![-INF], vec![INF], vec![vec![1.0], vec![-1.0]], vec![1.0, -1.0]);
        let r = solve_qp(&p, &Tolerances::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_split() {
        let p = qp(
            vec![true, true],
            vec![-INF, -INF],
            vec![INF, INF],
            vec![vec![1.0, 1.0], vec![-1.0, -1.0]],
            vec![2.0, -2.0],
        );
        let r = solve_qp(&p, &Tolerances::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[0] - 1.0).abs() < 1e-9 && (r.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bounds_bind() {
        // min x^2 + y^2, x >= 2, y <= -1
        let p = qp(vec![true, true], vec![2.0, -INF], vec![INF, -1.0], vec![], vec![]);
        let r = solve_qp(&p, &Tolerances::default()).unwrap();
        assert_eq!(r.x, vec![2.0, -1.0]);
        assert_eq!(r.objective, 5.0);
    }

    #[test]
    fn unsquared_slack_variables() {
        // min F^2  s.t.  s >= 1 - F, s >= 0, s <= 0.25  ->  F = 0.75
        let p = qp(
            vec![true, false],
            vec![-INF, 0.0],
            vec![INF, INF],
            vec![vec![-1.0, -1.0], vec![0.0, 1.0]],
            vec![-1.0, 0.25],
        );
        let r = solve_qp(&p, &Tolerances::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[0] - 0.75).abs() < 1e-9);
    }

    #[test]
    fn infeasible_reported() {
        let p = qp(vec![true], vec![0.0], vec![1.0], vec![vec![-1.0]], vec![-2.0]);
        assert_eq!(solve_qp(&p, &Tolerances::default()).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn fixed_variables_and_redundant_rows() {
        let p = qp(
            vec![true, true, true],
            vec![0.0, -INF, -INF],
            vec![0.0, INF, INF],
            vec![
                vec![1.0, 1.0, 1.0],
                vec![-1.0, -1.0, -1.0],
                vec![2.0, 2.0, 2.0],
                vec![0.0, -1.0, 0.0],
            ],
            vec![3.0, -3.0, 6.0, -2.0],
        );
        let r = solve_qp(&p, &Tolerances::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.x[0], 0.0);
        assert!((r.x[1] - 2.0).abs() < 1e-9 && (r.x[2] - 1.0).abs() < 1e-9);
    }
}
