//! Balancing energies, the benefit of a transmission layout, layout sweeps,
//! per-country reports and mismatch histograms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::{
    dispatch_series, unconstrained_balancing, zero_balancing, DispatchError, DispatchOptions,
    DispatchResult,
};
use crate::grid::{
    interpolate_a, interpolate_b, interpolate_c, total_capacity, CapacityLayout, GridError,
    Topology,
};
use crate::series::{sorted_quantile, MismatchSeries};
use crate::gw_to_twh_per_year;

pub use crate::grid::FlowQuantileTable;

/// Quantile levels reported for the post-transmission mismatch.
pub const REPORT_QUANTILES: [f64; 4] = [0.01, 0.10, 0.90, 0.99];

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no hours to evaluate")]
    Empty,
    #[error("benefit undefined: zero-layout and unconstrained energies are both {0}")]
    DegenerateBenefit(f64),
    #[error("energies out of order: unconstrained {unconstrained} exceeds zero-layout {zero}")]
    EnergyOrder { zero: f64, unconstrained: f64 },
    #[error("flow quantiles need a run without transfer limits")]
    ConstrainedRun,
    #[error("bin width must be positive and finite, got {0}")]
    InvalidBinWidth(f64),
    #[error("normalisation must be positive and finite, got {0}")]
    InvalidNormalisation(f64),
    #[error("sweep parameters must be strictly increasing")]
    UnorderedParams,
    #[error("family {0:?} needs {1}")]
    MissingInput(Family, &'static str),
    #[error("{0} nodes in the result but {1} in the comparison")]
    NodeCount(usize, usize),
    #[error("sweep point {param}: {source}")]
    SweepPoint {
        param: f64,
        #[source]
        source: Box<MetricsError>,
    },
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Annual balancing energy of a dispatch run, TWh.
pub fn balancing_energy(result: &DispatchResult) -> f64 {
    gw_to_twh_per_year(result.mean_balancing().iter().sum())
}

/// Share of the largest possible balancing reduction that a layout achieves.
pub fn benefit(e_zero: f64, e_layout: f64, e_unconstrained: f64) -> Result<f64, MetricsError> {
    if e_unconstrained > e_zero {
        return Err(MetricsError::EnergyOrder {
            zero: e_zero,
            unconstrained: e_unconstrained,
        });
    }
    if e_zero == e_unconstrained {
        return Err(MetricsError::DegenerateBenefit(e_zero));
    }
    Ok((e_zero - e_layout) / (e_zero - e_unconstrained))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenefitReport {
    pub layout: String,
    /// `None` when some link is unlimited in both directions.
    pub total_capacity_gw: Option<f64>,
    pub e_b_zero_twh: f64,
    pub e_b_layout_twh: f64,
    pub e_b_unconstrained_twh: f64,
    /// Layout energy as percent of annual consumption.
    pub e_b_pct: f64,
    /// `None` when the benefit is undefined.
    pub beta: Option<f64>,
}

impl BenefitReport {
    /// Builds the report for `result`. Solver noise can push the layout energy
    /// a hair outside the zero/unconstrained bracket; beta is clipped to [0, 1].
    pub fn new(
        layout: impl Into<String>,
        result: &DispatchResult,
        ms: &[MismatchSeries],
        consumption_twh: f64,
    ) -> Result<Self, MetricsError> {
        if result.is_empty() {
            return Err(MetricsError::Empty);
        }
        let e_zero = zero_balancing(ms)?;
        let e_inf = unconstrained_balancing(ms)?;
        let e = balancing_energy(result);
        let beta = match benefit(e_zero, e, e_inf) {
            Ok(b) => Some(b.clamp(0.0, 1.0)),
            Err(MetricsError::DegenerateBenefit(_)) => None,
            Err(other) => return Err(other),
        };
        Ok(Self {
            layout: layout.into(),
            total_capacity_gw: total_capacity(&result.layout).ok(),
            e_b_zero_twh: e_zero,
            e_b_layout_twh: e,
            e_b_unconstrained_twh: e_inf,
            e_b_pct: percent_of(e, consumption_twh),
            beta,
        })
    }
}

fn percent_of(e: f64, consumption: f64) -> f64 {
    if consumption > 0.0 {
        100.0 * e / consumption
    } else {
        0.0
    }
}

/// Annual consumption implied by mean loads in GW, TWh.
pub fn annual_consumption(mean_loads: &[f64]) -> f64 {
    gw_to_twh_per_year(mean_loads.iter().sum())
}

/// Per-link sorted flows of a run without transfer limits.
pub fn flow_quantile_table(result: &DispatchResult) -> Result<FlowQuantileTable, MetricsError> {
    if !result.layout.is_unlimited() {
        return Err(MetricsError::ConstrainedRun);
    }
    if result.is_empty() {
        return Err(MetricsError::Empty);
    }
    let flows = (0..result.link_count())
        .map(|l| result.flow_series(l))
        .collect();
    Ok(FlowQuantileTable::from_link_series(flows)?)
}

/// Quantile layout at level `c` percent from a run without transfer limits.
pub fn flow_quantile_layout(result: &DispatchResult, c: f64) -> Result<CapacityLayout, MetricsError> {
    Ok(interpolate_c(&flow_quantile_table(result)?, c)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// Present layout scaled by `a`, capped by the 99% quantile layout.
    A,
    /// 99% quantile layout scaled by `b`.
    B,
    /// Flow quantile layout at level `c` percent.
    C,
}

/// Everything a sweep needs besides its parameters.
#[derive(Debug, Clone)]
pub struct SweepInputs<'a> {
    pub topo: &'a Topology,
    pub ms: &'a [MismatchSeries],
    pub present: Option<&'a CapacityLayout>,
    pub q99: Option<&'a CapacityLayout>,
    pub flow_table: Option<&'a FlowQuantileTable>,
    pub consumption_twh: f64,
    pub options: DispatchOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: f64,
    pub total_capacity_gw: f64,
    pub e_b_twh: f64,
    pub e_b_pct: f64,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub family: Family,
    pub e_b_zero_twh: f64,
    pub e_b_unconstrained_twh: f64,
    pub points: Vec<SweepPoint>,
}

/// Builds the layout of `family` at parameter `p`.
pub fn family_layout(
    family: Family,
    p: f64,
    inputs: &SweepInputs,
) -> Result<CapacityLayout, MetricsError> {
    let q99 = || inputs.q99.ok_or(MetricsError::MissingInput(family, "a 99% quantile layout"));
    Ok(match family {
        Family::A => {
            let present = inputs
                .present
                .ok_or(MetricsError::MissingInput(family, "a present layout"))?;
            interpolate_a(present, q99()?, p)?
        }
        Family::B => interpolate_b(q99()?, p)?,
        Family::C => {
            let table = inputs
                .flow_table
                .ok_or(MetricsError::MissingInput(family, "flows of an unconstrained run"))?;
            interpolate_c(table, p)?
        }
    })
}

/// Dispatches one layout per parameter and records energy and benefit.
pub fn sweep(family: Family, params: &[f64], inputs: &SweepInputs) -> Result<SweepCurve, MetricsError> {
    if params.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(MetricsError::UnorderedParams);
    }
    let e_zero = zero_balancing(inputs.ms)?;
    let e_inf = unconstrained_balancing(inputs.ms)?;
    let mut points = Vec::with_capacity(params.len());
    for &param in params {
        let point = || -> Result<SweepPoint, MetricsError> {
            let layout = family_layout(family, param, inputs)?;
            let total = total_capacity(&layout)?;
            let result = dispatch_series(inputs.ms, inputs.topo, &layout, inputs.options)?;
            let e = balancing_energy(&result);
            let beta = match benefit(e_zero, e, e_inf) {
                Ok(b) => Some(b.clamp(0.0, 1.0)),
                Err(MetricsError::DegenerateBenefit(_)) => None,
                Err(other) => return Err(other),
            };
            Ok(SweepPoint {
                param,
                total_capacity_gw: total,
                e_b_twh: e,
                e_b_pct: percent_of(e, inputs.consumption_twh),
                beta,
            })
        };
        points.push(point().map_err(|source| MetricsError::SweepPoint {
            param,
            source: Box::new(source),
        })?);
    }
    Ok(SweepCurve {
        family,
        e_b_zero_twh: e_zero,
        e_b_unconstrained_twh: e_inf,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryRow {
    pub iso: String,
    /// Mean balancing after transmission over mean load.
    pub residual_norm: f64,
    /// Mean curtailment after transmission over mean load.
    pub excess_norm: f64,
    /// Quantiles of the post-transmission mismatch over mean load, at
    /// [`REPORT_QUANTILES`].
    pub quantiles: [f64; 4],
    /// Relative reduction of balancing against no transmission.
    pub import_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryReport {
    pub rows: Vec<CountryRow>,
    /// Load-weighted aggregate over all nodes.
    pub eu: CountryRow,
}

/// Post-transmission mismatch `C - B` of node `n` per hour.
pub fn post_mismatch(result: &DispatchResult, node: usize) -> Vec<f64> {
    result
        .hours
        .iter()
        .map(|h| h.curtailment[node] - h.balancing[node])
        .collect()
}

fn quantile_set(mut values: Vec<f64>, scale: f64) -> Result<[f64; 4], MetricsError> {
    values.sort_by(f64::total_cmp);
    let mut out = [0.0; 4];
    for (o, q) in out.iter_mut().zip(REPORT_QUANTILES) {
        *o = sorted_quantile(&values, q).map_err(GridError::from)? / scale;
    }
    Ok(out)
}

fn import_share(after: f64, before: f64) -> f64 {
    if before > 0.0 {
        1.0 - after / before
    } else {
        0.0
    }
}

/// Per-node residual and excess after transmission, normalised by mean load.
pub fn country_report(
    result: &DispatchResult,
    ms: &[MismatchSeries],
    mean_loads: &[f64],
) -> Result<CountryReport, MetricsError> {
    if result.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = result.node_count();
    if ms.len() != n {
        return Err(MetricsError::NodeCount(n, ms.len()));
    }
    if mean_loads.len() != n {
        return Err(MetricsError::NodeCount(n, mean_loads.len()));
    }
    let mean_b = result.mean_balancing();
    let mean_c = result.mean_curtailment();
    let mut rows = Vec::with_capacity(n);
    for node in 0..n {
        let load = mean_loads[node];
        rows.push(CountryRow {
            iso: ms[node].node.clone(),
            residual_norm: mean_b[node] / load,
            excess_norm: mean_c[node] / load,
            quantiles: quantile_set(post_mismatch(result, node), load)?,
            import_share: import_share(mean_b[node], ms[node].mean_residual()),
        });
    }
    let total_load: f64 = mean_loads.iter().sum();
    let weighted = |f: &dyn Fn(&CountryRow) -> f64| -> f64 {
        rows.iter()
            .zip(mean_loads)
            .map(|(r, l)| f(r) * l / total_load)
            .sum()
    };
    let aggregate_post: Vec<f64> = result
        .hours
        .iter()
        .map(|h| {
            h.curtailment.iter().sum::<f64>() - h.balancing.iter().sum::<f64>()
        })
        .collect();
    let eu = CountryRow {
        iso: "EU".into(),
        residual_norm: weighted(&|r| r.residual_norm),
        excess_norm: weighted(&|r| r.excess_norm),
        quantiles: quantile_set(aggregate_post, total_load)?,
        import_share: import_share(
            mean_b.iter().sum(),
            ms.iter().map(MismatchSeries::mean_residual).sum(),
        ),
    };
    Ok(CountryReport { rows, eu })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZeroPolicy {
    Exclude,
    Include,
}

/// Bin `k` covers `[k * width, (k + 1) * width)` in normalised units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub index: i64,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub normalisation: f64,
    pub bins: Vec<HistogramBin>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

/// Histogram of `series / normalize_by` with bins anchored at zero. Only
/// occupied bins are listed.
pub fn mismatch_histogram(
    series: &[f64],
    bin_width: f64,
    normalize_by: Option<f64>,
    zeros: ZeroPolicy,
) -> Result<Histogram, MetricsError> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(MetricsError::InvalidBinWidth(bin_width));
    }
    let norm = normalize_by.unwrap_or(1.0);
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(MetricsError::InvalidNormalisation(norm));
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &v in series {
        if v == 0.0 && zeros == ZeroPolicy::Exclude {
            continue;
        }
        let k = ((v / norm) / bin_width).floor() as i64;
        *counts.entry(k).or_default() += 1;
    }
    Ok(Histogram {
        bin_width,
        normalisation: norm,
        bins: counts
            .into_iter()
            .map(|(index, count)| HistogramBin {
                index,
                lower: index as f64 * bin_width,
                upper: (index + 1) as f64 * bin_width,
                count,
            })
            .collect(),
    })
}
