//! Network topology, incidence matrix and directed capacity layouts.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{sorted_quantile, SeriesError};

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("link {link} references unknown node {node}")]
    UnknownNode { link: usize, node: String },
    #[error("link {0} is a self-loop")]
    SelfLoop(usize),
    #[error("duplicate link between {0} and {1}")]
    DuplicateLink(String, String),
    #[error("duplicate node {0}")]
    DuplicateNode(String),
    #[error("network is disconnected: {0} cannot be reached from {1}")]
    Disconnected(String, String),
    #[error("network has no nodes")]
    NoNodes,
    #[error("invalid node {node}: {reason}")]
    InvalidNode { node: String, reason: &'static str },
    #[error("layout has {got} links but the topology has {expected}")]
    LayoutSize { expected: usize, got: usize },
    #[error("capacity on link {0} must be non-negative")]
    NegativeCapacity(usize),
    #[error("link {0} is unlimited in both directions; total capacity is undefined")]
    UnboundedLink(usize),
    #[error("scaling factor {0} out of range")]
    InvalidFactor(f64),
    #[error("quantile level {0} outside [50, 100]")]
    InvalidQuantileLevel(f64),
    #[error("flow series for link {0} is empty")]
    EmptyFlows(usize),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// A node of the network, usually a country.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    /// Average hourly load, GW.
    pub mean_load: f64,
    /// Renewable penetration: mean renewable generation over mean load.
    pub gamma: f64,
    /// Wind share of renewable generation.
    pub alpha_w: f64,
}

impl Node {
    pub fn new(id: impl Into<String>, mean_load: f64) -> Self {
        Self {
            id: id.into(),
            mean_load,
            gamma: 1.0,
            alpha_w: 0.7,
        }
    }

    fn validate(&self) -> Result<(), GridError> {
        let reason = if !(self.mean_load > 0.0 && self.mean_load.is_finite()) {
            "mean load must be positive"
        } else if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            "penetration must be non-negative"
        } else if !(0.0..=1.0).contains(&self.alpha_w) {
            "wind fraction must lie in [0, 1]"
        } else {
            return Ok(());
        };
        Err(GridError::InvalidNode {
            node: self.id.clone(),
            reason,
        })
    }
}

/// Directed link; positive flow runs from `from` to `to`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub id: usize,
    pub from: String,
    pub to: String,
}

impl Link {
    pub fn new(id: usize, from: impl Into<String>, to: impl Into<String>) -> Self {
        Self {
            id,
            from: from.into(),
            to: to.into(),
        }
    }

    /// `FROM-TO` label used in file headers.
    pub fn label(&self) -> String {
        format!("{}-{}", self.from, self.to)
    }
}

/// Connected network with a fixed node and link order.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: Vec<Node>,
    links: Vec<Link>,
    ends: Vec<(usize, usize)>,
    index: HashMap<String, usize>,
}

/// Builds the topology and checks that it is a connected simple graph.
pub fn build_topology(nodes: Vec<Node>, links: Vec<Link>) -> Result<Topology, GridError> {
    if nodes.is_empty() {
        return Err(GridError::NoNodes);
    }
    let mut index = HashMap::with_capacity(nodes.len());
    for (i, node) in nodes.iter().enumerate() {
        node.validate()?;
        if index.insert(node.id.clone(), i).is_some() {
            return Err(GridError::DuplicateNode(node.id.clone()));
        }
    }
    let mut ends = Vec::with_capacity(links.len());
    let mut seen = HashSet::new();
    for link in &links {
        let lookup = |id: &str| {
            index.get(id).copied().ok_or_else(|| GridError::UnknownNode {
                link: link.id,
                node: id.to_string(),
            })
        };
        let (a, b) = (lookup(&link.from)?, lookup(&link.to)?);
        if a == b {
            return Err(GridError::SelfLoop(link.id));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(GridError::DuplicateLink(link.from.clone(), link.to.clone()));
        }
        ends.push((a, b));
    }

    let mut adjacency = vec![Vec::new(); nodes.len()];
    for &(a, b) in &ends {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    let mut reached = vec![false; nodes.len()];
    let mut stack = vec![0];
    reached[0] = true;
    while let Some(n) = stack.pop() {
        for &m in &adjacency[n] {
            if !reached[m] {
                reached[m] = true;
                stack.push(m);
            }
        }
    }
    if let Some(missing) = reached.iter().position(|r| !r) {
        return Err(GridError::Disconnected(
            nodes[missing].id.clone(),
            nodes[0].id.clone(),
        ));
    }
    Ok(Topology {
        nodes,
        links,
        ends,
        index,
    })
}

impl Topology {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// `(from, to)` node indices of link `l`.
    pub fn link_ends(&self, l: usize) -> (usize, usize) {
        self.ends[l]
    }

    /// Index of the link joining `a` and `b` and whether it is oriented
    /// `a -> b`.
    pub fn find_link(&self, a: &str, b: &str) -> Option<(usize, bool)> {
        let (ia, ib) = (self.node_index(a)?, self.node_index(b)?);
        self.ends.iter().enumerate().find_map(|(l, &(f, t))| {
            if (f, t) == (ia, ib) {
                Some((l, true))
            } else if (f, t) == (ib, ia) {
                Some((l, false))
            } else {
                None
            }
        })
    }

    /// Node-by-link incidence matrix: `+1` where a link starts, `-1` where it
    /// ends.
    pub fn incidence(&self) -> Vec<Vec<i8>> {
        let mut k = vec![vec![0i8; self.links.len()]; self.nodes.len()];
        for (l, &(a, b)) in self.ends.iter().enumerate() {
            k[a][l] = 1;
            k[b][l] = -1;
        }
        k
    }

    /// Net export of every node, `K F`.
    pub fn net_export(&self, flows: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes.len()];
        for (&(a, b), &f) in self.ends.iter().zip(flows) {
            out[a] += f;
            out[b] -= f;
        }
        out
    }

    /// Replaces per-node mix parameters, keeping everything else.
    pub fn with_mix(mut self, alphas: &[f64], gamma: f64) -> Result<Self, GridError> {
        for (node, &a) in self.nodes.iter_mut().zip(alphas) {
            node.alpha_w = a;
            node.gamma = gamma;
            node.validate()?;
        }
        Ok(self)
    }
}

/// Directed limits of one link: flow must stay in `[-backward, forward]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkCapacity {
    pub forward: f64,
    pub backward: f64,
}

impl LinkCapacity {
    pub const ZERO: LinkCapacity = LinkCapacity {
        forward: 0.0,
        backward: 0.0,
    };
    pub const UNLIMITED: LinkCapacity = LinkCapacity {
        forward: f64::INFINITY,
        backward: f64::INFINITY,
    };

    pub fn new(forward: f64, backward: f64) -> Self {
        Self { forward, backward }
    }

    pub fn lower(&self) -> f64 {
        -self.backward
    }

    pub fn upper(&self) -> f64 {
        self.forward
    }

    pub fn contains(&self, flow: f64, tol: f64) -> bool {
        flow <= self.forward + tol && flow >= -self.backward - tol
    }
}

/// Directed transfer limits for every link of a topology, in link order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityLayout {
    caps: Vec<LinkCapacity>,
}

impl CapacityLayout {
    pub fn new(caps: Vec<LinkCapacity>) -> Result<Self, GridError> {
        for (l, c) in caps.iter().enumerate() {
            if !(c.forward >= 0.0 && c.backward >= 0.0) {
                return Err(GridError::NegativeCapacity(l));
            }
        }
        Ok(Self { caps })
    }

    pub fn uniform(links: usize, cap: LinkCapacity) -> Self {
        Self {
            caps: vec![cap; links],
        }
    }

    pub fn zero(links: usize) -> Self {
        Self::uniform(links, LinkCapacity::ZERO)
    }

    pub fn unlimited(links: usize) -> Self {
        Self::uniform(links, LinkCapacity::UNLIMITED)
    }

    pub fn caps(&self) -> &[LinkCapacity] {
        &self.caps
    }

    pub fn len(&self) -> usize {
        self.caps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.caps.is_empty()
    }

    pub fn is_unlimited(&self) -> bool {
        self.caps
            .iter()
            .all(|c| c.forward == f64::INFINITY && c.backward == f64::INFINITY)
    }

    pub fn is_zero(&self) -> bool {
        self.caps.iter().all(|c| c.forward == 0.0 && c.backward == 0.0)
    }

    pub fn check_topology(&self, topo: &Topology) -> Result<(), GridError> {
        if self.caps.len() != topo.link_count() {
            return Err(GridError::LayoutSize {
                expected: topo.link_count(),
                got: self.caps.len(),
            });
        }
        Ok(())
    }

    fn map_pairs(
        &self,
        other: &CapacityLayout,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<CapacityLayout, GridError> {
        if self.len() != other.len() {
            return Err(GridError::LayoutSize {
                expected: self.len(),
                got: other.len(),
            });
        }
        let caps = self
            .caps
            .iter()
            .zip(&other.caps)
            .map(|(a, b)| LinkCapacity::new(f(a.forward, b.forward), f(a.backward, b.backward)))
            .collect();
        Ok(CapacityLayout { caps })
    }
}

/// Sum over links of the larger directed capacity.
///
/// A direction without a realistic limit (infinite) is skipped in favour of
/// the finite opposite direction; a link unlimited both ways has no defined
/// total.
pub fn total_capacity(layout: &CapacityLayout) -> Result<f64, GridError> {
    layout
        .caps
        .iter()
        .enumerate()
        .map(|(l, c)| match (c.forward.is_finite(), c.backward.is_finite()) {
            (true, true) => Ok(c.forward.max(c.backward)),
            (true, false) => Ok(c.forward),
            (false, true) => Ok(c.backward),
            (false, false) => Err(GridError::UnboundedLink(l)),
        })
        .sum()
}

fn scale(factor: f64, cap: f64) -> f64 {
    if factor == 0.0 {
        0.0
    } else {
        factor * cap
    }
}

/// Present capacities scaled by `a`, capped by the 99% quantile layout.
pub fn interpolate_a(
    present: &CapacityLayout,
    q99: &CapacityLayout,
    a: f64,
) -> Result<CapacityLayout, GridError> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(GridError::InvalidFactor(a));
    }
    present.map_pairs(q99, |p, q| scale(a, p).min(q))
}

/// Linear reduction of the 99% quantile layout by `b` in `[0, 1]`.
pub fn interpolate_b(q99: &CapacityLayout, b: f64) -> Result<CapacityLayout, GridError> {
    if !(0.0..=1.0).contains(&b) {
        return Err(GridError::InvalidFactor(b));
    }
    let caps = q99
        .caps
        .iter()
        .map(|c| LinkCapacity::new(scale(b, c.forward), scale(b, c.backward)))
        .collect();
    Ok(CapacityLayout { caps })
}

/// Sorted signed flow samples per link, taken from a run without transfer
/// limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowQuantileTable {
    sorted: Vec<Vec<f64>>,
}

impl FlowQuantileTable {
    /// `flows[l]` is the hourly flow series of link `l`.
    pub fn from_link_series(mut flows: Vec<Vec<f64>>) -> Result<Self, GridError> {
        for (l, f) in flows.iter_mut().enumerate() {
            if f.is_empty() {
                return Err(GridError::EmptyFlows(l));
            }
            f.sort_by(f64::total_cmp);
        }
        Ok(Self { sorted: flows })
    }

    pub fn link_count(&self) -> usize {
        self.sorted.len()
    }

    pub fn samples(&self, l: usize) -> &[f64] {
        &self.sorted[l]
    }

    pub fn quantile(&self, l: usize, q: f64) -> Result<f64, GridError> {
        Ok(sorted_quantile(&self.sorted[l], q)?)
    }
}

/// Layout letting flows pass unobstructed `c` percent of the time on each
/// link and direction: the forward cap is the `c/100` flow quantile, the
/// backward cap the magnitude of the `1 - c/100` quantile, both clipped at 0.
pub fn interpolate_c(flow_stats: &FlowQuantileTable, c: f64) -> Result<CapacityLayout, GridError> {
    if !(50.0..=100.0).contains(&c) {
        return Err(GridError::InvalidQuantileLevel(c));
    }
    let q = c / 100.0;
    let caps = (0..flow_stats.link_count())
        .map(|l| {
            let hi = flow_stats.quantile(l, q)?;
            let lo = flow_stats.quantile(l, 1.0 - q)?;
            Ok(LinkCapacity::new(hi.max(0.0), (-lo).max(0.0)))
        })
        .collect::<Result<_, GridError>>()?;
    Ok(CapacityLayout { caps })
}
