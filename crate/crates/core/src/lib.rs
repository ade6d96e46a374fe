//! Hourly dispatch simulation of a renewable multi-node power system with
//! directed transfer limits between nodes.
//!
//! Each hour is solved in two steps: a linear program minimising the total
//! balancing energy, then a quadratic program choosing the smallest flows
//! (in the least-squares sense) that keep balancing at that minimum.
//! [`metrics`] turns the hourly results into balancing energies, the benefit
//! of a transmission layout and per-node reports.

pub mod dispatch;
pub mod fixtures;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod optim;
pub mod series;

/// Hours per year used to annualise mean powers.
pub const HOURS_PER_YEAR: f64 = 8760.0;

/// Converts a mean power in GW to an annual energy in TWh.
pub fn gw_to_twh_per_year(mean_gw: f64) -> f64 {
    mean_gw * HOURS_PER_YEAR / 1000.0
}
