//! CSV formats for topologies, layouts, series and dispatch results.
//!
//! Numbers are written with six significant digits (round-half-even on the
//! exact binary value) so outputs are byte-identical across platforms.

use std::collections::HashSet;

use thiserror::Error;

use crate::dispatch::DispatchResult;
use crate::grid::{CapacityLayout, GridError, Link, LinkCapacity, Node, Topology};
use crate::series::{CountrySeries, SeriesError};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("header must be {expected}, got {got}")]
    Header { expected: String, got: String },
    #[error("layout has no row for link {0}")]
    MissingLink(String),
    #[error("layout row {from}-{to} matches no link of the topology")]
    UnknownLink { from: String, to: String },
    #[error("layout lists link {0} twice")]
    RepeatedLink(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

fn parse_err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Formats `x` with six significant digits, `%g` style.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

/// Rounds `x` to the value [`fmt_num`] would print.
pub fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        fmt_num(x).parse().expect("formatted number parses")
    } else {
        x
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Parses a decimal, accepting `inf` for positive infinity.
pub fn parse_num(s: &str) -> Option<f64> {
    let s = s.trim();
    match s {
        "inf" | "Inf" | "INF" => Some(f64::INFINITY),
        _ => s.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn expect_header(rdr: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<(), FormatError> {
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if got != expected {
        return Err(FormatError::Header {
            expected: expected.join(","),
            got: got.join(","),
        });
    }
    Ok(())
}

/// Reads `link_id,from_iso,to_iso`. Links are returned in file order and
/// renumbered from zero.
pub fn parse_links(text: &str) -> Result<Vec<Link>, FormatError> {
    let mut rdr = reader(text);
    expect_header(&mut rdr, &["link_id", "from_iso", "to_iso"])?;
    let mut links = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(parse_err(i + 2, "expected 3 fields"));
        }
        rec[0]
            .parse::<usize>()
            .map_err(|_| parse_err(i + 2, format!("bad link id {:?}", &rec[0])))?;
        links.push(Link::new(links.len(), &rec[1], &rec[2]));
    }
    Ok(links)
}

pub fn write_links(topo: &Topology) -> String {
    let mut out = String::from("link_id,from_iso,to_iso\n");
    for l in topo.links() {
        out += &format!("{},{},{}\n", l.id, l.from, l.to);
    }
    out
}

/// Reads `iso,name,mean_load_gw`.
pub fn parse_nodes(text: &str) -> Result<Vec<Node>, FormatError> {
    let mut rdr = reader(text);
    expect_header(&mut rdr, &["iso", "name", "mean_load_gw"])?;
    let mut nodes = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let load = parse_num(&rec[2])
            .filter(|v| *v > 0.0 && v.is_finite())
            .ok_or_else(|| parse_err(i + 2, format!("bad mean load {:?}", &rec[2])))?;
        nodes.push(Node::new(&rec[0], load));
    }
    Ok(nodes)
}

/// Nodes in order of first appearance in `links`, with unit mean load.
pub fn nodes_from_links(links: &[Link]) -> Vec<Node> {
    let mut seen = HashSet::new();
    let mut nodes = Vec::new();
    for l in links {
        for id in [&l.from, &l.to] {
            if seen.insert(id.clone()) {
                nodes.push(Node::new(id.clone(), 1.0));
            }
        }
    }
    nodes
}

/// Reads a layout CSV against `topo`. A row may name a link in either
/// orientation; reversed rows have their two capacities swapped.
pub fn parse_layout(text: &str, topo: &Topology) -> Result<CapacityLayout, FormatError> {
    let mut rdr = reader(text);
    expect_header(
        &mut rdr,
        &["from_iso", "to_iso", "cap_forward_gw", "cap_backward_gw"],
    )?;
    let mut caps: Vec<Option<LinkCapacity>> = vec![None; topo.link_count()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let cap = |k: usize| {
            parse_num(&rec[k])
                .filter(|v| *v >= 0.0)
                .ok_or_else(|| parse_err(line, format!("bad capacity {:?}", &rec[k])))
        };
        let (fwd, bwd) = (cap(2)?, cap(3)?);
        let (l, forward) = topo
            .find_link(&rec[0], &rec[1])
            .ok_or_else(|| FormatError::UnknownLink {
                from: rec[0].to_string(),
                to: rec[1].to_string(),
            })?;
        if caps[l].is_some() {
            return Err(FormatError::RepeatedLink(topo.links()[l].label()));
        }
        caps[l] = Some(if forward {
            LinkCapacity::new(fwd, bwd)
        } else {
            LinkCapacity::new(bwd, fwd)
        });
    }
    let caps = caps
        .into_iter()
        .enumerate()
        .map(|(l, c)| c.ok_or_else(|| FormatError::MissingLink(topo.links()[l].label())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CapacityLayout::new(caps)?)
}

pub fn write_layout(layout: &CapacityLayout, topo: &Topology) -> String {
    let mut out = String::from("from_iso,to_iso,cap_forward_gw,cap_backward_gw\n");
    for (l, c) in topo.links().iter().zip(layout.caps()) {
        out += &format!(
            "{},{},{},{}\n",
            l.from,
            l.to,
            fmt_num(c.forward),
            fmt_num(c.backward)
        );
    }
    out
}

/// Reads `hour,L_<ISO>,W_<ISO>,S_<ISO>,...`. Countries are returned in order
/// of first appearance in the header; each needs all three columns.
pub fn parse_series(text: &str) -> Result<Vec<CountrySeries>, FormatError> {
    let mut rdr = reader(text);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("hour") {
        return Err(FormatError::Header {
            expected: "hour,L_<ISO>,W_<ISO>,S_<ISO>,...".into(),
            got: header.join(","),
        });
    }
    let mut isos: Vec<String> = Vec::new();
    // (country, kind) per column after `hour`; kind 0 = load, 1 = wind, 2 = solar.
    let mut columns = Vec::new();
    for name in &header[1..] {
        let (kind, iso) = match name.split_once('_') {
            Some(("L", iso)) => (0, iso),
            Some(("W", iso)) => (1, iso),
            Some(("S", iso)) => (2, iso),
            _ => return Err(parse_err(1, format!("unexpected column {name:?}"))),
        };
        let c = match isos.iter().position(|x| x == iso) {
            Some(c) => c,
            None => {
                isos.push(iso.to_string());
                isos.len() - 1
            }
        };
        if columns.contains(&(c, kind)) {
            return Err(parse_err(1, format!("column {name:?} repeated")));
        }
        columns.push((c, kind));
    }
    for (c, iso) in isos.iter().enumerate() {
        for (kind, prefix) in ["L", "W", "S"].iter().enumerate() {
            if !columns.contains(&(c, kind)) {
                return Err(parse_err(1, format!("missing column {prefix}_{iso}")));
            }
        }
    }
    let mut data = vec![[Vec::new(), Vec::new(), Vec::new()]; isos.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != header.len() {
            return Err(parse_err(line, "wrong number of fields"));
        }
        match rec[0].parse::<usize>() {
            Ok(h) if h == i => {}
            _ => return Err(parse_err(line, format!("hour must be {i}, got {:?}", &rec[0]))),
        }
        for (k, &(c, kind)) in columns.iter().enumerate() {
            let v = parse_num(&rec[k + 1])
                .filter(|v| *v >= 0.0 && v.is_finite())
                .ok_or_else(|| parse_err(line, format!("bad value {:?}", &rec[k + 1])))?;
            data[c][kind].push(v);
        }
    }
    isos.into_iter()
        .zip(data)
        .map(|(iso, [l, w, s])| Ok(CountrySeries::new(iso, l, w, s)?))
        .collect()
}

pub fn write_series(series: &[CountrySeries]) -> String {
    let mut out = String::from("hour");
    for s in series {
        out += &format!(",L_{0},W_{0},S_{0}", s.node);
    }
    out.push('\n');
    let t = series.first().map_or(0, CountrySeries::len);
    for h in 0..t {
        out += &h.to_string();
        for s in series {
            for v in [s.load[h], s.wind_raw[h], s.solar_raw[h]] {
                out.push(',');
                out += &fmt_num(v);
            }
        }
        out.push('\n');
    }
    out
}

/// A table with an `hour` column followed by one column per name.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyTable {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl HourlyTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("hour");
        for n in &self.names {
            out.push(',');
            out += n;
        }
        out.push('\n');
        for (h, row) in self.rows.iter().enumerate() {
            out += &h.to_string();
            for v in row {
                out.push(',');
                out += &fmt_num(*v);
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut rdr = reader(text);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.first().map(String::as_str) != Some("hour") {
            return Err(FormatError::Header {
                expected: "hour,...".into(),
                got: header.join(","),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() || rec[0].parse::<usize>() != Ok(i) {
                return Err(parse_err(i + 2, "malformed row"));
            }
            let row = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|_| parse_err(i + 2, format!("bad value {v:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Self {
            names: header[1..].to_vec(),
            rows,
        })
    }
}

pub fn flows_table(result: &DispatchResult, topo: &Topology) -> HourlyTable {
    HourlyTable {
        names: topo.links().iter().map(Link::label).collect(),
        rows: result.hours.iter().map(|h| h.flows.clone()).collect(),
    }
}

pub fn balancing_table(result: &DispatchResult, topo: &Topology) -> HourlyTable {
    HourlyTable {
        names: topo.nodes().iter().map(|n| n.id.clone()).collect(),
        rows: result.hours.iter().map(|h| h.balancing.clone()).collect(),
    }
}

pub fn curtailment_table(result: &DispatchResult, topo: &Topology) -> HourlyTable {
    HourlyTable {
        names: topo.nodes().iter().map(|n| n.id.clone()).collect(),
        rows: result.hours.iter().map(|h| h.curtailment.clone()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_topology;
    use proptest::prelude::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(-2.5), "-2.5");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333");
        assert_eq!(fmt_num(123456.7), "123457");
        assert_eq!(fmt_num(999999.5), "1e6");
        assert_eq!(fmt_num(1234567.0), "1.23457e6");
        assert_eq!(fmt_num(0.0001234567), "0.000123457");
        assert_eq!(fmt_num(1.5e-7), "1.5e-7");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
    }

    #[test]
    fn exact_ties_round_to_even() {
        // Exactly representable ties at the seventh significant digit.
        assert_eq!(fmt_num(1.0000005), "1"); // binary value lies below the tie
        assert_eq!(fmt_num(0.125), "0.125");
        assert_eq!(fmt_num(1234562.5 * 1.0), "1.23456e6");
        assert_eq!(fmt_num(2.5), "2.5");
        assert_eq!(format!("{:.2}", 0.125), "0.12");
        assert_eq!(format!("{:.2}", 0.375), "0.38");
        assert_eq!(fmt_num(100000.5), "100000");
        assert_eq!(fmt_num(100001.5), "100002");
    }

    proptest! {
        #[test]
        fn formatting_is_idempotent(x in -1e9f64..1e9) {
            let once = fmt_num(x);
            let back: f64 = once.parse().unwrap();
            prop_assert_eq!(fmt_num(back), once);
            prop_assert!((back - x).abs() <= 5e-6 * x.abs());
        }
    }

    fn line() -> Topology {
        build_topology(
            vec![Node::new("A", 1.0), Node::new("B", 2.0), Node::new("C", 3.0)],
            vec![Link::new(0, "A", "B"), Link::new(1, "B", "C")],
        )
        .unwrap()
    }

    #[test]
    fn layout_orientation_and_round_trip() {
        let topo = line();
        let text = "from_iso,to_iso,cap_forward_gw,cap_backward_gw\nC,B,1.5,inf\nA,B,0.5,0\n";
        let layout = parse_layout(text, &topo).unwrap();
        assert_eq!(layout.caps()[0], LinkCapacity::new(0.5, 0.0));
        assert_eq!(layout.caps()[1], LinkCapacity::new(f64::INFINITY, 1.5));
        let written = write_layout(&layout, &topo);
        assert_eq!(parse_layout(&written, &topo).unwrap(), layout);
    }

    #[test]
    fn layout_errors() {
        let topo = line();
        let head = "from_iso,to_iso,cap_forward_gw,cap_backward_gw\n";
        let missing = format!("{head}A,B,1,1\n");
        assert!(matches!(parse_layout(&missing, &topo), Err(FormatError::MissingLink(l)) if l == "B-C"));
        let twice = format!("{head}A,B,1,1\nB,A,1,1\nB,C,1,1\n");
        assert!(matches!(parse_layout(&twice, &topo), Err(FormatError::RepeatedLink(_))));
        let unknown = format!("{head}A,C,1,1\n");
        assert!(matches!(parse_layout(&unknown, &topo), Err(FormatError::UnknownLink { .. })));
        let negative = format!("{head}A,B,-1,1\nB,C,1,1\n");
        assert!(matches!(parse_layout(&negative, &topo), Err(FormatError::Parse { line: 2, .. })));
        assert!(matches!(parse_layout("a,b\n", &topo), Err(FormatError::Header { .. })));
    }

    #[test]
    fn series_round_trip() {
        let text = "hour,L_A,W_A,S_A,L_B,S_B,W_B\n0,1,2,0,3,1,1\n1,2,1,1,3,0,2\n";
        let series = parse_series(text).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[1].node, "B");
        assert_eq!(series[1].wind_raw, vec![1.0, 2.0]);
        assert_eq!(series[1].solar_raw, vec![1.0, 0.0]);
        let written = write_series(&series);
        assert_eq!(parse_series(&written).unwrap(), series);
        assert_eq!(write_series(&parse_series(&written).unwrap()), written);
    }

    #[test]
    fn series_errors() {
        assert!(parse_series("hour,L_A,W_A\n0,1,1\n").is_err());
        assert!(parse_series("hour,L_A,W_A,S_A\n1,1,1,1\n").is_err());
        assert!(parse_series("hour,L_A,W_A,S_A\n0,1,-1,1\n").is_err());
        assert!(parse_series("hour,X_A\n").is_err());
        assert!(matches!(
            parse_series("hour,L_A,W_A,S_A\n0,0,1,1\n"),
            Err(FormatError::Series(SeriesError::NonPositiveLoad { .. }))
        ));
    }

    #[test]
    fn links_and_nodes() {
        let links = parse_links("link_id,from_iso,to_iso\n7,A,B\n9,B,C\n").unwrap();
        assert_eq!(links[1].id, 1);
        let ids: Vec<String> = nodes_from_links(&links).into_iter().map(|n| n.id).collect();
        assert_eq!(ids, ["A", "B", "C"]);
        let nodes = parse_nodes("iso,name,mean_load_gw\nA,Aland,2.5\n").unwrap();
        assert_eq!(nodes[0].mean_load, 2.5);
        assert!(parse_nodes("iso,name,mean_load_gw\nA,Aland,0\n").is_err());
        let topo = line();
        assert_eq!(parse_links(&write_links(&topo)).unwrap(), topo.links());
    }

    #[test]
    fn hourly_table_round_trip() {
        let table = HourlyTable {
            names: vec!["A-B".into(), "B-C".into()],
            rows: vec![vec![0.5, -1.0], vec![1.0 / 3.0, 0.0]],
        };
        let text = table.to_csv();
        assert_eq!(text, "hour,A-B,B-C\n0,0.5,-1\n1,0.333333,0\n");
        let back = HourlyTable::parse(&text).unwrap();
        assert_eq!(back.to_csv(), text);
    }
}
