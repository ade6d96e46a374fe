//! Hourly load and renewable generation series, nodal mismatch and the
//! wind/solar mix search.

mod synth;

pub use synth::{synth_generate, SynthConfig, SynthNode};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative excess over the optimum that still counts as "near-optimal" when
/// reporting the band of acceptable mixes.
pub const MIX_BAND_TOLERANCE: f64 = 0.01;

/// Default resolution of the wind-fraction grid.
pub const DEFAULT_MIX_STEP: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("series for {node} have unequal lengths (load {load}, wind {wind}, solar {solar})")]
    LengthMismatch {
        node: String,
        load: usize,
        wind: usize,
        solar: usize,
    },
    #[error("series for {0} is empty")]
    Empty(String),
    #[error("load of {node} is not positive at hour {hour}")]
    NonPositiveLoad { node: String, hour: usize },
    #[error("{kind} generation of {node} is negative or non-finite at hour {hour}")]
    InvalidGeneration {
        node: String,
        kind: &'static str,
        hour: usize,
    },
    #[error("{kind} generation of {node} has zero mean")]
    ZeroMeanGeneration { node: String, kind: &'static str },
    #[error("wind fraction {0} outside [0, 1]")]
    InvalidMix(f64),
    #[error("penetration {0} must be finite and non-negative")]
    InvalidPenetration(f64),
    #[error("grid step {0} does not divide the unit interval")]
    InvalidGridStep(f64),
    #[error("quantile probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("cannot take quantiles of an empty series")]
    EmptyQuantileInput,
    #[error("year partition covers {covered} hours but the series has {len}")]
    PartitionMismatch { covered: usize, len: usize },
    #[error("year bucket {0} is empty")]
    EmptyYear(usize),
    #[error("invalid synthetic configuration: {0}")]
    InvalidSynthConfig(String),
}

/// Hourly load and raw wind/solar generation shapes of one node.
///
/// Generation shapes are on an arbitrary scale; they are normalised to their
/// own means when the mismatch is formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountrySeries {
    pub node: String,
    pub load: Vec<f64>,
    pub wind_raw: Vec<f64>,
    pub solar_raw: Vec<f64>,
}

impl CountrySeries {
    pub fn new(
        node: impl Into<String>,
        load: Vec<f64>,
        wind_raw: Vec<f64>,
        solar_raw: Vec<f64>,
    ) -> Result<Self, SeriesError> {
        let cs = Self {
            node: node.into(),
            load,
            wind_raw,
            solar_raw,
        };
        cs.validate()?;
        Ok(cs)
    }

    pub fn len(&self) -> usize {
        self.load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load.is_empty()
    }

    pub fn mean_load(&self) -> f64 {
        mean(&self.load)
    }

    pub fn validate(&self) -> Result<(), SeriesError> {
        let (l, w, s) = (self.load.len(), self.wind_raw.len(), self.solar_raw.len());
        if l != w || l != s {
            return Err(SeriesError::LengthMismatch {
                node: self.node.clone(),
                load: l,
                wind: w,
                solar: s,
            });
        }
        if l == 0 {
            return Err(SeriesError::Empty(self.node.clone()));
        }
        if let Some(hour) = self.load.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(SeriesError::NonPositiveLoad {
                node: self.node.clone(),
                hour,
            });
        }
        for (kind, values) in [("wind", &self.wind_raw), ("solar", &self.solar_raw)] {
            if let Some(hour) = values.iter().position(|&x| !(x >= 0.0 && x.is_finite())) {
                return Err(SeriesError::InvalidGeneration {
                    node: self.node.clone(),
                    kind,
                    hour,
                });
            }
            if mean(values) <= 0.0 {
                return Err(SeriesError::ZeroMeanGeneration {
                    node: self.node.clone(),
                    kind,
                });
            }
        }
        Ok(())
    }
}

/// Signed hourly mismatch of one node: renewable generation minus load, GW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchSeries {
    pub node: String,
    pub delta: Vec<f64>,
}

impl MismatchSeries {
    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    /// Mean of the negative part (residual load).
    pub fn mean_residual(&self) -> f64 {
        mean_by(&self.delta, |d| (-d).max(0.0))
    }

    /// Mean of the positive part (excess power).
    pub fn mean_excess(&self) -> f64 {
        mean_by(&self.delta, |d| d.max(0.0))
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn mean_by(values: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|&x| f(x)).sum::<f64>() / values.len() as f64
}

fn check_mix(gamma: f64, alpha_w: f64) -> Result<(), SeriesError> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(SeriesError::InvalidPenetration(gamma));
    }
    if !(0.0..=1.0).contains(&alpha_w) {
        return Err(SeriesError::InvalidMix(alpha_w));
    }
    Ok(())
}

/// Hourly mismatch for penetration `gamma` and wind fraction `alpha_w`.
///
/// Wind and solar shapes are normalised to unit mean and scaled to the mean
/// load, so for `gamma == 1` the mismatch averages to zero.
pub fn mismatch(
    cs: &CountrySeries,
    gamma: f64,
    alpha_w: f64,
) -> Result<MismatchSeries, SeriesError> {
    check_mix(gamma, alpha_w)?;
    cs.validate()?;
    let mean_load = cs.mean_load();
    let wind_scale = gamma * alpha_w * mean_load / mean(&cs.wind_raw);
    let solar_scale = gamma * (1.0 - alpha_w) * mean_load / mean(&cs.solar_raw);
    let delta = cs
        .load
        .iter()
        .zip(&cs.wind_raw)
        .zip(&cs.solar_raw)
        .map(|((&l, &w), &s)| wind_scale * w + solar_scale * s - l)
        .collect();
    Ok(MismatchSeries {
        node: cs.node.clone(),
        delta,
    })
}

/// Splits a mismatch into its residual load (negative part) and excess power
/// (positive part), both non-negative.
pub fn residual_excess(ms: &MismatchSeries) -> (Vec<f64>, Vec<f64>) {
    ms.delta
        .iter()
        .map(|&d| ((-d).max(0.0), d.max(0.0)))
        .unzip()
}

/// Outcome of the wind/solar mix search for one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixResult {
    pub alpha_star: f64,
    /// Mean residual load at `alpha_star`, GW.
    pub residual_mean: f64,
    /// Smallest grid mix whose mean residual is within the band tolerance.
    pub band_low: f64,
    /// Largest grid mix whose mean residual is within the band tolerance.
    pub band_high: f64,
}

fn grid_points(step: f64) -> Result<usize, SeriesError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(SeriesError::InvalidGridStep(step));
    }
    let n = (1.0 / step).round();
    if (n * step - 1.0).abs() > 1e-9 {
        return Err(SeriesError::InvalidGridStep(step));
    }
    Ok(n as usize)
}

/// Mean residual load for each wind fraction `k * step`, `k = 0..=1/step`.
pub fn residual_by_mix(
    cs: &CountrySeries,
    gamma: f64,
    step: f64,
) -> Result<Vec<(f64, f64)>, SeriesError> {
    let n = grid_points(step)?;
    let solar_only = mismatch(cs, gamma, 0.0)?;
    let wind_only = mismatch(cs, gamma, 1.0)?;
    Ok((0..=n)
        .map(|k| {
            let alpha = k as f64 / n as f64;
            let residual = mean_by_pair(&wind_only.delta, &solar_only.delta, alpha);
            (alpha, residual)
        })
        .collect())
}

// The mismatch is affine in the wind fraction.
fn mean_by_pair(wind: &[f64], solar: &[f64], alpha: f64) -> f64 {
    let total: f64 = wind
        .iter()
        .zip(solar)
        .map(|(&w, &s)| (-(alpha * w + (1.0 - alpha) * s)).max(0.0))
        .sum();
    total / wind.len() as f64
}

/// Grid search for the wind fraction minimising the mean residual load.
///
/// Ties go to the smaller fraction. The band is the contiguous run of grid
/// mixes around the optimum whose residual exceeds the optimum by at most
/// [`MIX_BAND_TOLERANCE`] (relative).
pub fn optimal_mix(cs: &CountrySeries, gamma: f64, step: f64) -> Result<MixResult, SeriesError> {
    let curve = residual_by_mix(cs, gamma, step)?;
    let mut best = 0;
    for (k, &(_, r)) in curve.iter().enumerate() {
        if r < curve[best].1 {
            best = k;
        }
    }
    let optimum = curve[best].1;
    let limit = optimum * (1.0 + MIX_BAND_TOLERANCE);
    let mut lo = best;
    while lo > 0 && curve[lo - 1].1 <= limit {
        lo -= 1;
    }
    let mut hi = best;
    while hi + 1 < curve.len() && curve[hi + 1].1 <= limit {
        hi += 1;
    }
    Ok(MixResult {
        alpha_star: curve[best].0,
        residual_mean: optimum,
        band_low: curve[lo].0,
        band_high: curve[hi].0,
    })
}

/// Load-weighted aggregate of several nodes: loads add up, and each node's
/// generation shapes enter normalised to its own mean load, so the aggregate
/// behaves like one node with unconstrained internal transmission.
pub fn aggregate(series: &[CountrySeries], node: &str) -> Result<CountrySeries, SeriesError> {
    let first = series
        .first()
        .ok_or_else(|| SeriesError::Empty(node.to_string()))?;
    let t = first.len();
    let mut load = vec![0.0; t];
    let mut wind = vec![0.0; t];
    let mut solar = vec![0.0; t];
    for cs in series {
        cs.validate()?;
        if cs.len() != t {
            return Err(SeriesError::LengthMismatch {
                node: cs.node.clone(),
                load: cs.len(),
                wind: t,
                solar: t,
            });
        }
        let mean_load = cs.mean_load();
        let ws = mean_load / mean(&cs.wind_raw);
        let ss = mean_load / mean(&cs.solar_raw);
        for h in 0..t {
            load[h] += cs.load[h];
            wind[h] += ws * cs.wind_raw[h];
            solar[h] += ss * cs.solar_raw[h];
        }
    }
    CountrySeries::new(node, load, wind, solar)
}

/// Rescales each year of `load` so that its mean equals the final year's mean.
///
/// `year_lengths` partitions the series into consecutive calendar years.
pub fn detrend(load: &[f64], year_lengths: &[usize]) -> Result<Vec<f64>, SeriesError> {
    let covered: usize = year_lengths.iter().sum();
    if covered != load.len() {
        return Err(SeriesError::PartitionMismatch {
            covered,
            len: load.len(),
        });
    }
    if let Some(i) = year_lengths.iter().position(|&n| n == 0) {
        return Err(SeriesError::EmptyYear(i));
    }
    let mut years = Vec::with_capacity(year_lengths.len());
    let mut start = 0;
    for &n in year_lengths {
        years.push(&load[start..start + n]);
        start += n;
    }
    let Some(last) = years.last() else {
        return Ok(Vec::new());
    };
    let target = mean(last);
    Ok(years
        .iter()
        .flat_map(|year| {
            let factor = target / mean(year);
            year.iter().map(move |&x| x * factor)
        })
        .collect())
}

/// Hours in each calendar year from `first_year` on, leap years included.
pub fn calendar_year_lengths(first_year: i32, years: usize) -> Vec<usize> {
    (0..years as i32)
        .map(|i| {
            let y = first_year + i;
            let leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
            if leap {
                8784
            } else {
                8760
            }
        })
        .collect()
}

/// Empirical quantiles using linear interpolation between order statistics:
/// for probability `q` the position in the sorted sample is `q * (n - 1)`.
pub fn quantiles(series: &[f64], qs: &[f64]) -> Result<Vec<f64>, SeriesError> {
    if series.is_empty() {
        return Err(SeriesError::EmptyQuantileInput);
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    qs.iter().map(|&q| sorted_quantile(&sorted, q)).collect()
}

/// Quantile of an already sorted, non-empty sample.
pub fn sorted_quantile(sorted: &[f64], q: f64) -> Result<f64, SeriesError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(SeriesError::InvalidProbability(q));
    }
    if sorted.is_empty() {
        return Err(SeriesError::EmptyQuantileInput);
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi || frac == 0.0 {
        return Ok(sorted[lo]);
    }
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}
