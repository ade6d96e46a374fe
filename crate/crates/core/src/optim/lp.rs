//! Bounded-variable primal simplex on a dense tableau.
//!
//! Each row `a_i x <= b_i` gets a slack `s_i >= 0`. Rows whose slack would
//! start negative get an artificial variable instead, removed in phase one.
//! Pricing and ratio ties follow Bland's rule (lowest index), so the method
//! cannot cycle and is fully deterministic.

use nalgebra::{DMatrix, DVector};

use super::{BoundedLP, OptimError, SolveReport, SolveStatus, Tolerances};

const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
enum State {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Free variable parked at zero.
    Zero,
}

struct Tableau {
    m: usize,
    ncols: usize,
    /// `B^-1 [A | I | -E]`, row-major.
    t: Vec<f64>,
    /// Basic variable of each row.
    basis: Vec<usize>,
    state: Vec<State>,
    x: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Reduced costs for the current phase.
    d: Vec<f64>,
    cost: Vec<f64>,
    /// Row of each artificial variable.
    art_rows: Vec<usize>,
    iterations: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Moved,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.ncols + j]
    }

    fn set_cost(&mut self, cost: Vec<f64>) {
        self.d = cost.clone();
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..self.ncols {
                    self.d[j] -= cb * self.t[i * self.ncols + j];
                }
            }
        }
        self.cost = cost;
    }

    fn objective(&self) -> f64 {
        self.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    /// Entering variable and direction (+1 increase, -1 decrease).
    fn price(&self, tol: f64) -> Option<(usize, f64)> {
        (0..self.ncols).find_map(|j| {
            if self.lower[j] == self.upper[j] {
                return None;
            }
            let d = self.d[j];
            match self.state[j] {
                State::Basic(_) => None,
                State::AtLower if d < -tol => Some((j, 1.0)),
                State::AtUpper if d > tol => Some((j, -1.0)),
                State::Zero if d.abs() > tol => Some((j, -d.signum())),
                _ => None,
            }
        })
    }

    fn step(&mut self, tol: f64) -> Step {
        let Some((j, dir)) = self.price(tol) else {
            return Step::Optimal;
        };

        // Bound flip of the entering variable itself.
        let mut theta = self.upper[j] - self.lower[j];
        let mut leave: Option<(usize, bool)> = None;
        for i in 0..self.m {
            let alpha = dir * self.at(i, j);
            let b = self.basis[i];
            let ratio = if alpha > PIVOT_TOL && self.lower[b].is_finite() {
                ((self.x[b] - self.lower[b]) / alpha).max(0.0)
            } else if alpha < -PIVOT_TOL && self.upper[b].is_finite() {
                ((self.upper[b] - self.x[b]) / -alpha).max(0.0)
            } else {
                continue;
            };
            let better = match leave {
                _ if ratio < theta => true,
                Some((r, _)) if ratio == theta => b < self.basis[r],
                _ => false,
            };
            if better {
                theta = ratio;
                leave = Some((i, alpha > 0.0));
            }
        }
        if theta == f64::INFINITY {
            return Step::Unbounded;
        }

        self.iterations += 1;
        let delta = dir * theta;
        for i in 0..self.m {
            let a = self.at(i, j);
            if a != 0.0 {
                let b = self.basis[i];
                self.x[b] -= delta * a;
            }
        }
        self.x[j] += delta;

        match leave {
            None => {
                self.state[j] = if dir > 0.0 {
                    State::AtUpper
                } else {
                    State::AtLower
                };
                self.x[j] = if dir > 0.0 { self.upper[j] } else { self.lower[j] };
            }
            Some((r, to_lower)) => {
                let out = self.basis[r];
                self.x[out] = if to_lower {
                    self.lower[out]
                } else {
                    self.upper[out]
                };
                self.state[out] = if to_lower { State::AtLower } else { State::AtUpper };
                self.pivot(r, j);
            }
        }
        Step::Moved
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let n = self.ncols;
        let p = self.at(r, j);
        for v in &mut self.t[r * n..(r + 1) * n] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.t[r * n..(r + 1) * n].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * n + j];
            if f != 0.0 {
                for (v, &pr) in self.t[i * n..(i + 1) * n].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
            }
        }
        let f = self.d[j];
        if f != 0.0 {
            for (v, &pr) in self.d.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
        }
        self.basis[r] = j;
        self.state[j] = State::Basic(r);
    }

    fn run(&mut self, tol: f64, max_iterations: usize) -> Option<Step> {
        loop {
            if self.iterations >= max_iterations {
                return None;
            }
            match self.step(tol) {
                Step::Moved => continue,
                other => return Some(other),
            }
        }
    }
}

fn home_value(lower: f64, upper: f64) -> (f64, State) {
    if lower.is_finite() {
        (lower, State::AtLower)
    } else if upper.is_finite() {
        (upper, State::AtUpper)
    } else {
        (0.0, State::Zero)
    }
}

/// Solves a bounded-variable LP. Infeasibility and unboundedness are reported
/// through the status, never as errors; errors are reserved for malformed
/// input.
pub fn solve_lp(p: &BoundedLP, tol: &Tolerances) -> Result<SolveReport, OptimError> {
    p.validate()?;
    let n = p.objective.len();
    let m = p.rows.len();

    let mut lower = p.lower.clone();
    let mut upper = p.upper.clone();
    let mut x = Vec::with_capacity(n + 2 * m);
    let mut state = Vec::with_capacity(n + 2 * m);
    for j in 0..n {
        let (v, s) = home_value(lower[j], upper[j]);
        x.push(v);
        state.push(s);
    }
    let residual: Vec<f64> = (0..m)
        .map(|i| p.rhs[i] - super::dot(&p.rows[i], &x[..n]))
        .collect();
    let needs_artificial: Vec<usize> = (0..m).filter(|&i| residual[i] < 0.0).collect();
    let na = needs_artificial.len();
    let ncols = n + m + na;

    // Slacks.
    lower.extend(std::iter::repeat(0.0).take(m));
    upper.extend(std::iter::repeat(f64::INFINITY).take(m));
    x.extend(std::iter::repeat(0.0).take(m));
    state.extend(std::iter::repeat(State::AtLower).take(m));
    // Artificials.
    lower.extend(std::iter::repeat(0.0).take(na));
    upper.extend(std::iter::repeat(f64::INFINITY).take(na));
    x.extend(std::iter::repeat(0.0).take(na));
    state.extend(std::iter::repeat(State::AtLower).take(na));

    let mut t = vec![0.0; m * ncols];
    let mut basis = vec![0; m];
    let mut art_of_row = vec![None; m];
    for (k, &i) in needs_artificial.iter().enumerate() {
        art_of_row[i] = Some(n + m + k);
    }
    for i in 0..m {
        let row = &mut t[i * ncols..(i + 1) * ncols];
        row[..n].copy_from_slice(&p.rows[i]);
        row[n + i] = 1.0;
        match art_of_row[i] {
            None => {
                basis[i] = n + i;
                x[n + i] = residual[i];
            }
            Some(a) => {
                // Row scaled by -1 so the artificial enters with +1.
                row[a] = -1.0;
                for v in row.iter_mut() {
                    *v = -*v;
                }
                basis[i] = a;
                x[a] = -residual[i];
            }
        }
        state[basis[i]] = State::Basic(i);
    }

    let mut tab = Tableau {
        m,
        ncols,
        t,
        basis,
        state,
        x,
        lower,
        upper,
        d: Vec::new(),
        cost: Vec::new(),
        art_rows: needs_artificial,
        iterations: 0,
    };

    let failure = |tab: &Tableau, status| SolveReport {
        x: tab.x[..n].to_vec(),
        objective: match status {
            SolveStatus::Infeasible => f64::INFINITY,
            SolveStatus::Unbounded => f64::NEG_INFINITY,
            _ => p.objective_at(&tab.x[..n]),
        },
        status,
        iterations: tab.iterations,
        max_violation: p.max_violation(&tab.x[..n]),
    };

    let scale = 1.0 + p.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if na > 0 {
        let mut cost = vec![0.0; ncols];
        for c in &mut cost[n + m..] {
            *c = 1.0;
        }
        tab.set_cost(cost);
        match tab.run(tol.optimality, tol.max_iterations) {
            None => return Ok(failure(&tab, SolveStatus::NumericalFailure)),
            Some(Step::Unbounded) => return Ok(failure(&tab, SolveStatus::NumericalFailure)),
            _ => {}
        }
        if tab.objective() > tol.feasibility * scale {
            return Ok(failure(&tab, SolveStatus::Infeasible));
        }
        for a in n + m..ncols {
            tab.upper[a] = 0.0;
            if !matches!(tab.state[a], State::Basic(_)) {
                tab.x[a] = 0.0;
                tab.state[a] = State::AtLower;
            }
        }
    }

    let mut cost = p.objective.clone();
    cost.resize(ncols, 0.0);
    let cscale = 1.0 + p.objective.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    tab.set_cost(cost);
    let status = match tab.run(tol.optimality * cscale, tol.max_iterations) {
        None => return Ok(failure(&tab, SolveStatus::NumericalFailure)),
        Some(Step::Unbounded) => return Ok(failure(&tab, SolveStatus::Unbounded)),
        _ => SolveStatus::Optimal,
    };

    let xs = refactor(p, &tab).unwrap_or_else(|| tab.x[..n].to_vec());
    let max_violation = p.max_violation(&xs);
    let status = if max_violation <= tol.feasibility * scale {
        status
    } else {
        SolveStatus::NumericalFailure
    };
    Ok(SolveReport {
        objective: p.objective_at(&xs),
        x: xs,
        status,
        iterations: tab.iterations,
        max_violation,
    })
}

/// Recomputes the basic variables from the original data, discarding the
/// round-off accumulated in the tableau.
fn refactor(p: &BoundedLP, tab: &Tableau) -> Option<Vec<f64>> {
    let n = p.objective.len();
    let m = tab.m;
    if m == 0 {
        return Some(tab.x[..n].to_vec());
    }
    let column = |j: usize, i: usize| -> f64 {
        if j < n {
            p.rows[i][j]
        } else if j < n + m {
            if j - n == i {
                1.0
            } else {
                0.0
            }
        } else if tab.art_rows[j - n - m] == i {
            // Artificial columns are -e_i of their row.
            -1.0
        } else {
            0.0
        }
    };
    let b = DMatrix::from_fn(m, m, |i, k| column(tab.basis[k], i));
    let mut rhs = DVector::from_column_slice(&p.rhs);
    for j in 0..tab.ncols {
        if matches!(tab.state[j], State::Basic(_)) || tab.x[j] == 0.0 {
            continue;
        }
        for i in 0..m {
            rhs[i] -= column(j, i) * tab.x[j];
        }
    }
    let xb = b.lu().solve(&rhs)?;
    let mut x = tab.x.clone();
    for (r, &var) in tab.basis.iter().enumerate() {
        x[var] = xb[r];
    }
    // Snap structural values onto bounds they sit within round-off of.
    let mut out = x[..n].to_vec();
    for j in 0..n {
        out[j] = out[j].clamp(p.lower[j], p.upper[j]);
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(c: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>, rows: Vec<Vec<f64>>, rhs: Vec<f64>) -> BoundedLP {
        BoundedLP {
            objective: c,
            lower: lo,
            upper: hi,
            rows,
            rhs,
        }
    }

    #[test]
    fn minimise_single_bounded_variable() {
        let r = solve_lp(&lp(vec![1.0], vec![0.0], vec![1.0], vec![], vec![]), &Tolerances::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.x, vec![0.0]);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn covering_constraint() {
        // min x + y  s.t.  x + y >= 1
        let p = lp(
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![vec![-1.0, -1.0]],
            vec![-1.0],
        );
        let r = solve_lp(&p, &Tolerances::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded_are_reported() {
        let p = lp(vec![1.0], vec![0.0], vec![1.0], vec![vec![-1.0]], vec![-2.0]);
        assert_eq!(solve_lp(&p, &Tolerances::default()).unwrap().status, SolveStatus::Infeasible);
        let p = lp(vec![-1.0], vec![0.0], vec![f64::INFINITY], vec![], vec![]);
        assert_eq!(solve_lp(&p, &Tolerances::default()).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn free_variables() {
        // min |x - 3| via t >= x - 3, t >= 3 - x
        let p = lp(
            vec![0.0, 1.0],
            vec![f64::NEG_INFINITY, f64::NEG_INFINITY],
            vec![f64::INFINITY, f64::INFINITY],
            vec![vec![1.0, -1.0], vec![-1.0, -1.0]],
            vec![3.0, -3.0],
        );
        let r = solve_lp(&p, &Tolerances::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!(r.objective.abs() < 1e-12);
        assert!((r.x[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn malformed_input_is_an_error() {
        let p = lp(vec![1.0], vec![2.0], vec![1.0], vec![], vec![]);
        assert!(solve_lp(&p, &Tolerances::default()).is_err());
    }

    #[test]
    fn redundant_rows_tolerated() {
        let p = lp(
            vec![-1.0, -1.0],
            vec![0.0, 0.0],
            vec![0.0, 5.0],
            vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]],
            vec![2.0, 2.0, 4.0],
        );
        let r = solve_lp(&p, &Tolerances::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective + 2.0).abs() < 1e-12);
    }
}
