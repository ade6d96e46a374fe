//! Two-step hourly dispatch.
//!
//! Step one minimises total balancing `sum_n B_n` over flows within their
//! limits, as an LP with one slack per node standing for its balancing.
//! Step two keeps total balancing within `eps` of that minimum and minimises
//! the sum of squared flows. Balancing and curtailment are then read off the
//! post-transmission mismatch `Delta - K F`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CapacityLayout, GridError, Topology};
use crate::optim::{
    solve_lp, solve_qp_from, BoundedLP, BoxQP, OptimError, SolveStatus, Tolerances,
};
use crate::series::MismatchSeries;
use crate::gw_to_twh_per_year;

/// Post-transmission mismatches smaller than this (GW) are treated as zero.
pub const RESIDUAL_SNAP_GW: f64 = 1e-9;

/// Flows smaller than this (GW) are rounding noise and reported as zero.
pub const FLOW_SNAP_GW: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum DispatchError {
    #[error("mismatch of node {node} is not finite at hour {hour}")]
    NonFiniteMismatch { node: usize, hour: usize },
    #[error("expected {expected} mismatch values, got {got}")]
    WrongNodeCount { expected: usize, got: usize },
    #[error("mismatch series {index} belongs to {got}, expected {expected}")]
    NodeOrder {
        index: usize,
        expected: String,
        got: String,
    },
    #[error("mismatch series have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("no mismatch series given")]
    Empty,
    #[error("{stage} failed at hour {hour} with status {status:?}")]
    Solver {
        stage: &'static str,
        hour: usize,
        status: SolveStatus,
    },
    #[error("relaxation eps must be finite and non-negative, got {0}")]
    InvalidEps(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatchOptions {
    /// Slack on the balancing constraint of step two, GW. `None` picks
    /// [`default_eps`] for every hour.
    pub eps: Option<f64>,
    pub tolerances: Tolerances,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        Self {
            eps: None,
            tolerances: Tolerances::default(),
        }
    }
}

/// `max(1e-8 * sum_n Delta_n^-, 1e-9)` GW.
pub fn default_eps(delta: &[f64]) -> f64 {
    let residual: f64 = delta.iter().map(|d| (-d).max(0.0)).sum();
    (1e-8 * residual).max(1e-9)
}

/// Flows, balancing and curtailment of one hour, all in GW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyDispatch {
    pub flows: Vec<f64>,
    pub balancing: Vec<f64>,
    pub curtailment: Vec<f64>,
    /// Minimal total balancing from step one.
    pub b_min: f64,
}

impl HourlyDispatch {
    fn isolated(delta: &[f64], links: usize) -> Self {
        let balancing: Vec<f64> = delta.iter().map(|d| (-d).max(0.0)).collect();
        Self {
            flows: vec![0.0; links],
            curtailment: delta.iter().map(|d| d.max(0.0)).collect(),
            b_min: balancing.iter().sum(),
            balancing,
        }
    }
}

/// Per-hour solver for one topology and layout; the constraint matrix is
/// built once and reused.
#[derive(Debug, Clone)]
pub struct Dispatcher<'a> {
    topo: &'a Topology,
    layout: &'a CapacityLayout,
    options: DispatchOptions,
    rows: Vec<Vec<f64>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    trivial: bool,
}

impl<'a> Dispatcher<'a> {
    pub fn new(
        topo: &'a Topology,
        layout: &'a CapacityLayout,
        options: DispatchOptions,
    ) -> Result<Self, DispatchError> {
        layout.check_topology(topo)?;
        if let Some(eps) = options.eps {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(DispatchError::InvalidEps(eps));
            }
        }
        let (n, l) = (topo.node_count(), topo.link_count());
        let mut rows = vec![vec![0.0; l + n]; n];
        for (link, cap) in layout.caps().iter().enumerate() {
            let _ = cap;
            let (a, b) = topo.link_ends(link);
            rows[a][link] = 1.0;
            rows[b][link] = -1.0;
        }
        for (node, row) in rows.iter_mut().enumerate() {
            row[l + node] = -1.0;
        }
        let mut lower: Vec<f64> = layout.caps().iter().map(|c| c.lower()).collect();
        let mut upper: Vec<f64> = layout.caps().iter().map(|c| c.upper()).collect();
        lower.extend(std::iter::repeat(0.0).take(n));
        upper.extend(std::iter::repeat(f64::INFINITY).take(n));
        Ok(Self {
            topo,
            layout,
            options,
            rows,
            lower,
            upper,
            trivial: l == 0 || layout.is_zero(),
        })
    }

    pub fn layout(&self) -> &CapacityLayout {
        self.layout
    }

    /// Solves one hour. `hour` only labels errors.
    pub fn solve(&self, delta: &[f64], hour: usize) -> Result<HourlyDispatch, DispatchError> {
        let (n, l) = (self.topo.node_count(), self.topo.link_count());
        if delta.len() != n {
            return Err(DispatchError::WrongNodeCount {
                expected: n,
                got: delta.len(),
            });
        }
        if let Some(node) = delta.iter().position(|d| !d.is_finite()) {
            return Err(DispatchError::NonFiniteMismatch { node, hour });
        }
        // Without both a surplus and a deficit node no flow can lower
        // balancing, and zero flow is the least-squares choice.
        let surplus = delta.iter().any(|&d| d > 0.0);
        let deficit = delta.iter().any(|&d| d < 0.0);
        if self.trivial || !surplus || !deficit {
            return Ok(HourlyDispatch::isolated(delta, l));
        }
        let tol = &self.options.tolerances;

        let mut objective = vec![0.0; l + n];
        for c in &mut objective[l..] {
            *c = 1.0;
        }
        let lp = BoundedLP {
            objective,
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            rows: self.rows.clone(),
            rhs: delta.to_vec(),
        };
        let step1 = solve_lp(&lp, tol)?;
        if step1.status != SolveStatus::Optimal {
            return Err(DispatchError::Solver {
                stage: "balancing LP",
                hour,
                status: step1.status,
            });
        }

        // Restart from the LP flows with each slack at its tightest value.
        let mut x0 = step1.x;
        for j in 0..l {
            x0[j] = x0[j].clamp(self.lower[j], self.upper[j]);
        }
        let export = self.topo.net_export(&x0[..l]);
        for node in 0..n {
            x0[l + node] = (export[node] - delta[node]).max(0.0);
        }
        let b_min: f64 = x0[l..].iter().sum();
        let eps = self.options.eps.unwrap_or_else(|| default_eps(delta));

        let mut rows = self.rows.clone();
        let mut sum_row = vec![0.0; l + n];
        for c in &mut sum_row[l..] {
            *c = 1.0;
        }
        rows.push(sum_row);
        let mut rhs = delta.to_vec();
        rhs.push(b_min + eps);
        let mut squared = vec![true; l];
        squared.resize(l + n, false);
        let qp = BoxQP {
            squared,
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            rows,
            rhs,
        };
        let step2 = solve_qp_from(&qp, &x0, tol)?;
        if step2.status != SolveStatus::Optimal {
            return Err(DispatchError::Solver {
                stage: "flow QP",
                hour,
                status: step2.status,
            });
        }

        let flows: Vec<f64> = (0..l)
            .map(|j| {
                let f = step2.x[j].clamp(self.lower[j], self.upper[j]);
                if f.abs() <= FLOW_SNAP_GW {
                    0.0
                } else {
                    f
                }
            })
            .collect();
        let export = self.topo.net_export(&flows);
        let mut balancing = Vec::with_capacity(n);
        let mut curtailment = Vec::with_capacity(n);
        for node in 0..n {
            let mut rest = delta[node] - export[node];
            if rest.abs() <= RESIDUAL_SNAP_GW {
                rest = 0.0;
            }
            balancing.push((-rest).max(0.0));
            curtailment.push(rest.max(0.0));
        }
        Ok(HourlyDispatch {
            flows,
            balancing,
            curtailment,
            b_min,
        })
    }
}

/// Dispatches a single hour.
pub fn dispatch_hour(
    delta: &[f64],
    topo: &Topology,
    layout: &CapacityLayout,
    options: DispatchOptions,
) -> Result<HourlyDispatch, DispatchError> {
    Dispatcher::new(topo, layout, options)?.solve(delta, 0)
}

/// Hourly dispatch over a whole period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub hours: Vec<HourlyDispatch>,
    pub layout: CapacityLayout,
    pub options: DispatchOptions,
}

impl DispatchResult {
    pub fn len(&self) -> usize {
        self.hours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hours.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.hours.first().map_or(0, |h| h.balancing.len())
    }

    pub fn link_count(&self) -> usize {
        self.layout.len()
    }

    pub fn flow_series(&self, link: usize) -> Vec<f64> {
        self.hours.iter().map(|h| h.flows[link]).collect()
    }

    pub fn balancing_series(&self, node: usize) -> Vec<f64> {
        self.hours.iter().map(|h| h.balancing[node]).collect()
    }

    pub fn curtailment_series(&self, node: usize) -> Vec<f64> {
        self.hours.iter().map(|h| h.curtailment[node]).collect()
    }

    /// Mean balancing of each node, GW.
    pub fn mean_balancing(&self) -> Vec<f64> {
        self.mean_by(|h| &h.balancing)
    }

    /// Mean curtailment of each node, GW.
    pub fn mean_curtailment(&self) -> Vec<f64> {
        self.mean_by(|h| &h.curtailment)
    }

    fn mean_by(&self, f: impl Fn(&HourlyDispatch) -> &Vec<f64>) -> Vec<f64> {
        let mut sum = vec![0.0; self.node_count()];
        for h in &self.hours {
            for (s, v) in sum.iter_mut().zip(f(h)) {
                *s += v;
            }
        }
        let t = self.hours.len().max(1) as f64;
        sum.into_iter().map(|s| s / t).collect()
    }
}

/// Mismatch vector of every hour, nodes in topology order.
pub fn mismatch_matrix(
    ms: &[MismatchSeries],
    topo: &Topology,
) -> Result<Vec<Vec<f64>>, DispatchError> {
    if ms.len() != topo.node_count() {
        return Err(DispatchError::WrongNodeCount {
            expected: topo.node_count(),
            got: ms.len(),
        });
    }
    for (index, (series, node)) in ms.iter().zip(topo.nodes()).enumerate() {
        if series.node != node.id {
            return Err(DispatchError::NodeOrder {
                index,
                expected: node.id.clone(),
                got: series.node.clone(),
            });
        }
    }
    let t = check_lengths(ms)?;
    Ok((0..t)
        .map(|h| ms.iter().map(|s| s.delta[h]).collect())
        .collect())
}

fn check_lengths(ms: &[MismatchSeries]) -> Result<usize, DispatchError> {
    let first = ms.first().ok_or(DispatchError::Empty)?;
    let t = first.len();
    for s in ms {
        if s.len() != t {
            return Err(DispatchError::LengthMismatch(t, s.len()));
        }
    }
    if t == 0 {
        return Err(DispatchError::Empty);
    }
    Ok(t)
}

/// Dispatches every hour independently. Hours run in parallel on the current
/// rayon pool; the result does not depend on scheduling.
pub fn dispatch_series(
    ms: &[MismatchSeries],
    topo: &Topology,
    layout: &CapacityLayout,
    options: DispatchOptions,
) -> Result<DispatchResult, DispatchError> {
    let deltas = mismatch_matrix(ms, topo)?;
    let dispatcher = Dispatcher::new(topo, layout, options)?;
    let solved: Vec<Result<HourlyDispatch, DispatchError>> = deltas
        .par_iter()
        .enumerate()
        .map(|(hour, delta)| dispatcher.solve(delta, hour))
        .collect();
    let hours = solved.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(DispatchResult {
        hours,
        layout: layout.clone(),
        options,
    })
}

/// Annual balancing with unlimited transmission, TWh: only the deficit of
/// the aggregated system remains.
pub fn unconstrained_balancing(ms: &[MismatchSeries]) -> Result<f64, DispatchError> {
    let t = check_lengths(ms)?;
    let total: f64 = (0..t)
        .map(|h| (-ms.iter().map(|s| s.delta[h]).sum::<f64>()).max(0.0))
        .sum();
    Ok(gw_to_twh_per_year(total / t as f64))
}

/// Annual balancing without transmission, TWh: every node covers its own
/// residual load.
pub fn zero_balancing(ms: &[MismatchSeries]) -> Result<f64, DispatchError> {
    check_lengths(ms)?;
    Ok(gw_to_twh_per_year(
        ms.iter().map(MismatchSeries::mean_residual).sum(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_topology, LinkCapacity, Link, Node};

    fn topo(ids: &[&str], links: &[(&str, &str)]) -> Topology {
        build_topology(
            ids.iter().map(|id| Node::new(*id, 1.0)).collect(),
            links
                .iter()
                .enumerate()
                .map(|(i, (a, b))| Link::new(i, *a, *b))
                .collect(),
        )
        .unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-6
    }

    #[test]
    fn two_nodes_full_export() {
        let t = topo(&["A", "B"], &[("A", "B")]);
        let h = dispatch_hour(&[2.0, -1.0], &t, &CapacityLayout::unlimited(1), DispatchOptions::default()).unwrap();
        assert!(close(h.flows[0], 1.0));
        assert!(close(h.balancing[0], 0.0) && close(h.balancing[1], 0.0));
        assert!(close(h.curtailment[0], 1.0) && close(h.curtailment[1], 0.0));
        assert!(close(h.b_min, 0.0));
    }

    #[test]
    fn two_nodes_capped() {
        let t = topo(&["A", "B"], &[("A", "B")]);
        let layout = CapacityLayout::new(vec![LinkCapacity::new(0.5, f64::INFINITY)]).unwrap();
        let h = dispatch_hour(&[2.0, -1.0], &t, &layout, DispatchOptions::default()).unwrap();
        assert!(close(h.flows[0], 0.5));
        assert!(close(h.balancing[1], 0.5) && h.balancing[0] == 0.0);
        assert!(close(h.curtailment[0], 1.5) && h.curtailment[1] == 0.0);
        assert!(close(h.b_min, 0.5));
    }

    #[test]
    fn three_node_line() {
        let t = topo(&["A", "B", "C"], &[("A", "B"), ("B", "C")]);
        let layout = CapacityLayout::new(vec![
            LinkCapacity::new(0.5, f64::INFINITY),
            LinkCapacity::UNLIMITED,
        ])
        .unwrap();
        let h = dispatch_hour(&[1.0, -2.0, 1.0], &t, &layout, DispatchOptions::default()).unwrap();
        assert!(close(h.flows[0], 0.5));
        // Link B->C carries 1.0 from C to B.
        assert!(close(h.flows[1], -1.0));
        assert!(close(h.balancing[1], 0.5));
        assert!(close(h.curtailment[0], 0.5));
        assert!(close(h.b_min, 0.5));
    }

    #[test]
    fn zero_layout_isolates_nodes() {
        let t = topo(&["A", "B"], &[("A", "B")]);
        let h = dispatch_hour(&[2.0, -1.0], &t, &CapacityLayout::zero(1), DispatchOptions::default()).unwrap();
        assert_eq!(h.flows, vec![0.0]);
        assert_eq!(h.balancing, vec![0.0, 1.0]);
        assert_eq!(h.curtailment, vec![2.0, 0.0]);
    }

    #[test]
    fn errors() {
        let t = topo(&["A", "B"], &[("A", "B")]);
        let layout = CapacityLayout::unlimited(1);
        assert!(matches!(
            dispatch_hour(&[f64::NAN, 1.0], &t, &layout, DispatchOptions::default()),
            Err(DispatchError::NonFiniteMismatch { node: 0, .. })
        ));
        assert!(matches!(
            dispatch_hour(&[1.0, 1.0], &t, &CapacityLayout::unlimited(2), DispatchOptions::default()),
            Err(DispatchError::Grid(GridError::LayoutSize { .. }))
        ));
        let ms = vec![
            MismatchSeries { node: "A".into(), delta: vec![1.0, 2.0] },
            MismatchSeries { node: "B".into(), delta: vec![1.0] },
        ];
        assert_eq!(
            dispatch_series(&ms, &t, &layout, DispatchOptions::default()),
            Err(DispatchError::LengthMismatch(2, 1))
        );
        let swapped = vec![
            MismatchSeries { node: "B".into(), delta: vec![1.0] },
            MismatchSeries { node: "A".into(), delta: vec![1.0] },
        ];
        assert!(matches!(
            dispatch_series(&swapped, &t, &layout, DispatchOptions::default()),
            Err(DispatchError::NodeOrder { index: 0, .. })
        ));
    }

    #[test]
    fn closed_form_energies() {
        let ms = vec![
            MismatchSeries { node: "A".into(), delta: vec![1.0, -1.0] },
            MismatchSeries { node: "B".into(), delta: vec![-2.0, -1.0] },
        ];
        assert!((unconstrained_balancing(&ms).unwrap() - 13.14).abs() < 1e-9);
        let surplus = vec![MismatchSeries { node: "A".into(), delta: vec![1.0, 3.0] }];
        assert_eq!(unconstrained_balancing(&surplus).unwrap(), 0.0);
        let deficit = vec![MismatchSeries { node: "A".into(), delta: vec![-1.0; 4] }];
        assert!((zero_balancing(&deficit).unwrap() - 8.76).abs() < 1e-12);
        let flat = vec![MismatchSeries { node: "A".into(), delta: vec![0.0; 4] }];
        assert_eq!(zero_balancing(&flat).unwrap(), 0.0);
        assert_eq!(zero_balancing(&[]), Err(DispatchError::Empty));
    }
}
