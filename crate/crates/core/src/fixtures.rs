//! Shipped data: the 27-node European topology, mean loads, four capacity
//! layouts and a default synthetic-data configuration.
//!
//! The synthetic configuration is a stand-in for measured weather and load
//! data. Its series exercise the pipeline; they are not a model of any real
//! year.

use crate::grid::{build_topology, CapacityLayout, Topology};
use crate::io::{parse_layout, parse_links, parse_nodes};
use crate::series::SynthConfig;

pub const EUROPE_TOPOLOGY_CSV: &str = include_str!("../data/topology/europe.csv");
pub const MEAN_LOADS_CSV: &str = include_str!("../data/nodes/mean_loads.csv");
pub const PRESENT_LAYOUT_CSV: &str = include_str!("../data/layouts/present.csv");
pub const INTERMEDIATE_LAYOUT_CSV: &str = include_str!("../data/layouts/intermediate.csv");
pub const Q99_LAYOUT_CSV: &str = include_str!("../data/layouts/q99.csv");
pub const UNCONSTRAINED_LAYOUT_CSV: &str = include_str!("../data/layouts/unconstrained.csv");
pub const DEFAULT_SYNTH_JSON: &str = include_str!("../data/synth/default.json");

/// Named layouts that ship with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShippedLayout {
    Present,
    Intermediate,
    Q99,
    Unconstrained,
}

impl ShippedLayout {
    pub const ALL: [ShippedLayout; 4] = [
        ShippedLayout::Present,
        ShippedLayout::Intermediate,
        ShippedLayout::Q99,
        ShippedLayout::Unconstrained,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShippedLayout::Present => "present",
            ShippedLayout::Intermediate => "intermediate",
            ShippedLayout::Q99 => "q99",
            ShippedLayout::Unconstrained => "unconstrained",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == name)
    }

    pub fn csv(self) -> &'static str {
        match self {
            ShippedLayout::Present => PRESENT_LAYOUT_CSV,
            ShippedLayout::Intermediate => INTERMEDIATE_LAYOUT_CSV,
            ShippedLayout::Q99 => Q99_LAYOUT_CSV,
            ShippedLayout::Unconstrained => UNCONSTRAINED_LAYOUT_CSV,
        }
    }
}

/// The 27-node, 44-link European network with shipped mean loads.
pub fn europe_topology() -> Topology {
    let nodes = parse_nodes(MEAN_LOADS_CSV).expect("shipped node table parses");
    let links = parse_links(EUROPE_TOPOLOGY_CSV).expect("shipped topology parses");
    build_topology(nodes, links).expect("shipped topology is valid")
}

pub fn europe_layout(which: ShippedLayout) -> CapacityLayout {
    parse_layout(which.csv(), &europe_topology()).expect("shipped layout parses")
}

pub fn default_synth_config() -> SynthConfig {
    serde_json::from_str(DEFAULT_SYNTH_JSON).expect("shipped synth config parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::total_capacity;

    #[test]
    fn shipped_data_loads() {
        let topo = europe_topology();
        assert_eq!((topo.node_count(), topo.link_count()), (27, 44));
        for which in ShippedLayout::ALL {
            assert_eq!(europe_layout(which).len(), 44);
            assert_eq!(ShippedLayout::from_name(which.name()), Some(which));
        }
        let cfg = default_synth_config();
        cfg.validate().unwrap();
        let ids: Vec<&str> = topo.nodes().iter().map(|n| n.id.as_str()).collect();
        let synth: Vec<&str> = cfg.nodes.iter().map(|n| n.iso.as_str()).collect();
        assert_eq!(ids, synth);
    }

    #[test]
    fn present_total_uses_finite_direction() {
        let t = total_capacity(&europe_layout(ShippedLayout::Present)).unwrap();
        assert!((t - 69.02).abs() < 1e-9);
    }
}
