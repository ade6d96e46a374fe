//! Command implementations. Every command reads its inputs, writes its
//! outputs into the output directory and finishes with a manifest.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::anyhow;
use eurobalance::dispatch::{dispatch_series, DispatchError, DispatchOptions, DispatchResult};
use eurobalance::fixtures::{
    default_synth_config, europe_topology, ShippedLayout, DEFAULT_SYNTH_JSON,
    EUROPE_TOPOLOGY_CSV, MEAN_LOADS_CSV,
};
use eurobalance::grid::{
    build_topology, interpolate_c, total_capacity, CapacityLayout, FlowQuantileTable,
    LinkCapacity, Node, Topology,
};
use eurobalance::io::{
    balancing_table, curtailment_table, flows_table, nodes_from_links, parse_layout,
    parse_links, parse_series, round_sig, write_layout, write_series, HourlyTable,
};
use eurobalance::metrics::{
    annual_consumption, country_report, flow_quantile_table, mismatch_histogram,
    post_mismatch, sweep, BenefitReport, CountryRow, MetricsError, SweepInputs, ZeroPolicy,
};
use eurobalance::series::{
    aggregate, mismatch, optimal_mix, synth_generate, CountrySeries, MismatchSeries,
    SynthConfig, DEFAULT_MIX_STEP,
};
use serde_json::{Map, Value};

use crate::config::{
    AlphaPolicy, CommandConfig, Digest256, RunConfig, RunManifest, SeriesSource, MANIFEST_FILE,
};
use crate::table::{Cell, Table};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub type Res<T> = Result<T, Failure>;

pub fn input(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        error: e.into(),
    }
}

fn dispatch_failure(e: DispatchError) -> Failure {
    let code = match e {
        DispatchError::Solver { .. } | DispatchError::Optim(_) => EXIT_SOLVER,
        _ => EXIT_INPUT,
    };
    Failure {
        code,
        error: e.into(),
    }
}

fn metrics_code(e: &MetricsError) -> u8 {
    match e {
        MetricsError::Dispatch(DispatchError::Solver { .. } | DispatchError::Optim(_)) => EXIT_SOLVER,
        MetricsError::SweepPoint { source, .. } => metrics_code(source),
        _ => EXIT_INPUT,
    }
}

fn metrics_failure(e: MetricsError) -> Failure {
    Failure {
        code: metrics_code(&e),
        error: e.into(),
    }
}

/// Shipped inputs by the name used in manifests.
pub fn builtin(name: &str) -> Option<&'static str> {
    match name {
        "europe-topology" => Some(EUROPE_TOPOLOGY_CSV),
        "mean-loads" => Some(MEAN_LOADS_CSV),
        "synth-default" => Some(DEFAULT_SYNTH_JSON),
        _ => name
            .strip_prefix("layout-")
            .and_then(ShippedLayout::from_name)
            .map(ShippedLayout::csv),
    }
}

struct Run {
    cfg: RunConfig,
    inputs: Vec<Digest256>,
    outputs: Vec<Digest256>,
    notes: Vec<String>,
    summary: Map<String, Value>,
}

impl Run {
    fn read(&mut self, role: &str, path: &Path) -> Res<String> {
        let text = fs::read_to_string(path)
            .map_err(|e| input(anyhow!("cannot read {} {}: {e}", role, path.display())))?;
        self.inputs
            .push(Digest256::of(role, path.display().to_string(), text.as_bytes()));
        Ok(text)
    }

    fn shipped(&mut self, role: &str, name: &str) {
        let content = builtin(name).expect("known shipped input");
        self.inputs
            .push(Digest256::of(role, format!("builtin:{name}"), content.as_bytes()));
    }

    fn write(&mut self, name: &str, content: &str) -> Res<()> {
        let path = self.cfg.out.join(name);
        fs::write(&path, content)
            .map_err(|e| input(anyhow!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(Digest256::of("output", name, content.as_bytes()));
        Ok(())
    }

    fn table(&mut self, stem: &str, table: &Table) -> Res<()> {
        self.write(&format!("{stem}.csv"), &table.to_csv())?;
        self.write(&format!("{stem}.json"), &table.to_json())
    }

    fn summarise(&mut self, key: &str, value: f64) {
        let v = serde_json::Number::from_f64(round_sig(value))
            .map_or(Value::Null, Value::Number);
        self.summary.insert(key.into(), v);
    }

    fn options(&self) -> DispatchOptions {
        DispatchOptions {
            eps: self.cfg.eps,
            ..Default::default()
        }
    }
}

/// Inputs shared by every command that dispatches.
struct Data {
    topo: Topology,
    ms: Vec<MismatchSeries>,
    mean_loads: Vec<f64>,
}

impl Data {
    fn consumption(&self) -> f64 {
        annual_consumption(&self.mean_loads)
    }
}

fn load_series(run: &mut Run) -> Res<Vec<CountrySeries>> {
    match run.cfg.series.clone() {
        SeriesSource::File(path) => {
            let text = run.read("series", &path)?;
            parse_series(&text).map_err(input)
        }
        SeriesSource::Synth {
            seed,
            hours,
            config,
        } => {
            let mut synth: SynthConfig = match config {
                Some(path) => {
                    let text = run.read("synth-config", &path)?;
                    serde_json::from_str(&text).map_err(input)?
                }
                None => {
                    run.shipped("synth-config", "synth-default");
                    default_synth_config()
                }
            };
            synth.seed = seed;
            synth_generate(&synth, hours).map_err(input)
        }
    }
}

fn load_topology(run: &mut Run, series: &[CountrySeries]) -> Res<Topology> {
    match run.cfg.topology.clone() {
        None => {
            run.shipped("topology", "europe-topology");
            run.shipped("mean-loads", "mean-loads");
            Ok(europe_topology())
        }
        Some(path) => {
            let text = run.read("topology", &path)?;
            let links = parse_links(&text).map_err(input)?;
            // Countries without links join as nodes of their own; more than one
            // of them leaves the network disconnected, which is rejected.
            let mut ids: Vec<String> = nodes_from_links(&links).into_iter().map(|n| n.id).collect();
            for s in series {
                if !ids.contains(&s.node) {
                    ids.push(s.node.clone());
                }
            }
            let nodes = ids
                .into_iter()
                .map(|id| {
                    let load = series
                        .iter()
                        .find(|s| s.node == id)
                        .map_or(1.0, CountrySeries::mean_load);
                    Node::new(id, load)
                })
                .collect();
            build_topology(nodes, links).map_err(input)
        }
    }
}

/// Series reordered to match the topology's nodes.
fn align(series: Vec<CountrySeries>, topo: &Topology) -> Res<Vec<CountrySeries>> {
    let ids: HashSet<&str> = topo.nodes().iter().map(|n| n.id.as_str()).collect();
    if let Some(extra) = series.iter().find(|s| !ids.contains(s.node.as_str())) {
        return Err(input(anyhow!("series node {} is not in the topology", extra.node)));
    }
    topo.nodes()
        .iter()
        .map(|n| {
            series
                .iter()
                .find(|s| s.node == n.id)
                .cloned()
                .ok_or_else(|| input(anyhow!("series has no columns for node {}", n.id)))
        })
        .collect()
}

fn mismatches(run: &Run, series: &[CountrySeries]) -> Res<Vec<MismatchSeries>> {
    series
        .iter()
        .map(|cs| {
            let alpha = match run.cfg.alpha {
                AlphaPolicy::Fixed(a) => a,
                AlphaPolicy::Optimal => {
                    optimal_mix(cs, run.cfg.gamma, DEFAULT_MIX_STEP)
                        .map_err(input)?
                        .alpha_star
                }
            };
            mismatch(cs, run.cfg.gamma, alpha).map_err(input)
        })
        .collect()
}

fn load_data(run: &mut Run) -> Res<Data> {
    let series = load_series(run)?;
    let topo = load_topology(run, &series)?;
    let series = align(series, &topo)?;
    let ms = mismatches(run, &series)?;
    Ok(Data {
        mean_loads: series.iter().map(CountrySeries::mean_load).collect(),
        topo,
        ms,
    })
}

/// A layout by keyword (`zero`, `unlimited`, a shipped name) or file path.
fn resolve_layout(run: &mut Run, spec: &str, topo: &Topology) -> Res<(String, CapacityLayout)> {
    let links = topo.link_count();
    match spec {
        "zero" => return Ok(("zero".into(), CapacityLayout::zero(links))),
        "unlimited" => return Ok(("unlimited".into(), CapacityLayout::unlimited(links))),
        _ => {}
    }
    if let Some(which) = ShippedLayout::from_name(spec) {
        run.shipped("layout", &format!("layout-{}", which.name()));
        let layout = parse_layout(which.csv(), topo).map_err(input)?;
        return Ok((which.name().into(), layout));
    }
    let path = PathBuf::from(spec);
    let text = run.read("layout", &path)?;
    let layout = parse_layout(&text, topo).map_err(input)?;
    let name = path
        .file_stem()
        .map_or_else(|| "layout".into(), |s| s.to_string_lossy().into_owned());
    Ok((name, layout))
}

fn run_dispatch(run: &Run, data: &Data, layout: &CapacityLayout) -> Res<DispatchResult> {
    dispatch_series(&data.ms, &data.topo, layout, run.options()).map_err(dispatch_failure)
}

/// Per-link flow samples from a stored unconstrained run, or from a fresh one.
fn unconstrained_flows(run: &mut Run, data: &Data, stored: Option<PathBuf>) -> Res<FlowQuantileTable> {
    match stored {
        Some(path) => {
            let text = run.read("unconstrained-flows", &path)?;
            let table = HourlyTable::parse(&text).map_err(input)?;
            let labels: Vec<String> = data.topo.links().iter().map(|l| l.label()).collect();
            if table.names != labels {
                return Err(input(anyhow!(
                    "flow columns of {} do not match the topology's links",
                    path.display()
                )));
            }
            let per_link = (0..labels.len())
                .map(|l| table.rows.iter().map(|r| r[l]).collect())
                .collect();
            FlowQuantileTable::from_link_series(per_link).map_err(input)
        }
        None => {
            run.notes
                .push("no stored unconstrained run given; computed one for the flow quantiles".into());
            let result = run_dispatch(run, data, &CapacityLayout::unlimited(data.topo.link_count()))?;
            flow_quantile_table(&result).map_err(metrics_failure)
        }
    }
}

fn rounded(layout: &CapacityLayout) -> CapacityLayout {
    let caps = layout
        .caps()
        .iter()
        .map(|c| LinkCapacity::new(round_sig(c.forward), round_sig(c.backward)))
        .collect();
    CapacityLayout::new(caps).expect("rounding keeps capacities non-negative")
}

/// Quantile layout as written to disk: six significant digits.
fn quantile_layout(table: &FlowQuantileTable, c: f64) -> Res<CapacityLayout> {
    Ok(rounded(&interpolate_c(table, c).map_err(input)?))
}

fn cmd_mix(run: &mut Run) -> Res<()> {
    let series = load_series(run)?;
    let gamma = run.cfg.gamma;
    let mut table = Table::new(&["iso", "alpha_star", "residual_mean_norm", "band_low", "band_high"]);
    let eu = aggregate(&series, "EU").map_err(input)?;
    for cs in series.iter().chain(std::iter::once(&eu)) {
        let m = optimal_mix(cs, gamma, DEFAULT_MIX_STEP).map_err(input)?;
        table.push(vec![
            cs.node.as_str().into(),
            m.alpha_star.into(),
            (m.residual_mean / cs.mean_load()).into(),
            m.band_low.into(),
            m.band_high.into(),
        ]);
        if cs.node == "EU" {
            run.summarise("eu_alpha_star", m.alpha_star);
        }
    }
    run.table("mix", &table)
}

fn benefit_table(report: &BenefitReport) -> Table {
    let mut t = Table::new(&[
        "layout",
        "total_capacity_gw",
        "E_B_zero_twh",
        "E_B_layout_twh",
        "E_B_unconstrained_twh",
        "E_B_pct",
        "beta",
    ]);
    t.push(vec![
        report.layout.as_str().into(),
        report.total_capacity_gw.unwrap_or(f64::INFINITY).into(),
        report.e_b_zero_twh.into(),
        report.e_b_layout_twh.into(),
        report.e_b_unconstrained_twh.into(),
        report.e_b_pct.into(),
        report.beta.into(),
    ]);
    t
}

fn cmd_dispatch(run: &mut Run, spec: &str) -> Res<()> {
    let data = load_data(run)?;
    let (name, layout) = resolve_layout(run, spec, &data.topo)?;
    let result = run_dispatch(run, &data, &layout)?;
    run.write("flows.csv", &flows_table(&result, &data.topo).to_csv())?;
    run.write("balancing.csv", &balancing_table(&result, &data.topo).to_csv())?;
    run.write("curtailment.csv", &curtailment_table(&result, &data.topo).to_csv())?;
    let report = BenefitReport::new(name, &result, &data.ms, data.consumption())
        .map_err(metrics_failure)?;
    run.table("benefit", &benefit_table(&report))?;
    run.summarise("E_B_twh", report.e_b_layout_twh);
    run.summarise("E_B_pct", report.e_b_pct);
    if let Some(beta) = report.beta {
        run.summarise("beta", beta);
    }
    Ok(())
}

fn cmd_sweep(
    run: &mut Run,
    family: eurobalance::metrics::Family,
    params: &[f64],
    present_spec: &str,
    q99_spec: &str,
    stored: Option<PathBuf>,
) -> Res<()> {
    use eurobalance::metrics::Family;
    if params.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(metrics_failure(MetricsError::UnorderedParams));
    }
    let data = load_data(run)?;
    let present = match family {
        Family::A => Some(resolve_layout(run, present_spec, &data.topo)?.1),
        _ => None,
    };
    let needs_q99 = family != Family::C;
    let needs_table = family == Family::C || (needs_q99 && q99_spec == "derived");
    let table = if needs_table {
        Some(unconstrained_flows(run, &data, stored)?)
    } else {
        None
    };
    let q99 = if !needs_q99 {
        None
    } else if q99_spec == "derived" {
        Some(quantile_layout(table.as_ref().expect("table loaded"), 99.0)?)
    } else {
        Some(resolve_layout(run, q99_spec, &data.topo)?.1)
    };
    let inputs = SweepInputs {
        topo: &data.topo,
        ms: &data.ms,
        present: present.as_ref(),
        q99: q99.as_ref(),
        flow_table: table.as_ref(),
        consumption_twh: data.consumption(),
        options: run.options(),
    };
    let curve = sweep(family, params, &inputs).map_err(metrics_failure)?;
    let mut t = Table::new(&["param", "total_capacity_gw", "E_B_twh", "E_B_pct", "beta"]);
    for p in &curve.points {
        t.push(vec![
            p.param.into(),
            p.total_capacity_gw.into(),
            p.e_b_twh.into(),
            p.e_b_pct.into(),
            p.beta.into(),
        ]);
    }
    run.table("sweep", &t)?;
    run.summarise("E_B_zero_twh", curve.e_b_zero_twh);
    run.summarise("E_B_unconstrained_twh", curve.e_b_unconstrained_twh);
    Ok(())
}

fn cmd_quantile_layout(run: &mut Run, c: f64, stored: Option<PathBuf>) -> Res<()> {
    if !(50.0..=100.0).contains(&c) {
        return Err(input(anyhow!("quantile level must lie in [50, 100], got {c}")));
    }
    let data = load_data(run)?;
    let table = unconstrained_flows(run, &data, stored)?;
    let layout = quantile_layout(&table, c)?;
    let name = format!("layout_c{}.csv", eurobalance::io::fmt_num(c));
    run.write(&name, &write_layout(&layout, &data.topo))?;
    let total = total_capacity(&layout).map_err(input)?;
    run.summarise("total_capacity_gw", total);
    let full = total_capacity(&quantile_layout(&table, 100.0)?).map_err(input)?;
    run.summarise("total_capacity_c100_gw", full);
    if full > 0.0 {
        run.notes.push(format!(
            "total capacity is {:.3} of the c = 100 layout (informational)",
            total / full
        ));
    }
    Ok(())
}

fn report_row(layout: &str, row: &CountryRow) -> Vec<Cell> {
    vec![
        layout.into(),
        row.iso.as_str().into(),
        row.residual_norm.into(),
        row.excess_norm.into(),
        row.quantiles[0].into(),
        row.quantiles[1].into(),
        row.quantiles[2].into(),
        row.quantiles[3].into(),
        row.import_share.into(),
    ]
}

fn cmd_report(run: &mut Run, specs: &[String], bin_width: f64) -> Res<()> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(input(anyhow!("bin width must be positive, got {bin_width}")));
    }
    let data = load_data(run)?;
    let mut layouts = Vec::new();
    for spec in specs {
        let (name, layout) = resolve_layout(run, spec, &data.topo)?;
        if layouts.iter().any(|(n, _)| n == &name) {
            return Err(input(anyhow!("layout name {name} given twice")));
        }
        layouts.push((name, layout));
    }
    let mut report = Table::new(&[
        "layout",
        "iso",
        "residual_norm",
        "excess_norm",
        "q01",
        "q10",
        "q90",
        "q99",
        "import_share",
    ]);
    let total_load: f64 = data.mean_loads.iter().sum();
    for (name, layout) in &layouts {
        let result = run_dispatch(run, &data, layout)?;
        let cr = country_report(&result, &data.ms, &data.mean_loads).map_err(metrics_failure)?;
        for row in cr.rows.iter().chain(std::iter::once(&cr.eu)) {
            report.push(report_row(name, row));
        }
        let mut hist = Table::new(&["iso", "bin_lower", "bin_upper", "count"]);
        let mut series: Vec<(String, Vec<f64>, f64)> = (0..data.topo.node_count())
            .map(|n| (data.topo.nodes()[n].id.clone(), post_mismatch(&result, n), data.mean_loads[n]))
            .collect();
        let eu: Vec<f64> = result
            .hours
            .iter()
            .map(|h| h.curtailment.iter().sum::<f64>() - h.balancing.iter().sum::<f64>())
            .collect();
        series.push(("EU".into(), eu, total_load));
        for (iso, values, load) in &series {
            let h = mismatch_histogram(values, bin_width, Some(*load), ZeroPolicy::Exclude)
                .map_err(metrics_failure)?;
            for b in &h.bins {
                hist.push(vec![
                    iso.as_str().into(),
                    b.lower.into(),
                    b.upper.into(),
                    (b.count as f64).into(),
                ]);
            }
        }
        run.table(&format!("histogram_{name}"), &hist)?;
    }
    run.table("report", &report)
}

fn cmd_synth(run: &mut Run) -> Res<()> {
    if !matches!(run.cfg.series, SeriesSource::Synth { .. }) {
        return Err(input(anyhow!("synth needs --synth-seed")));
    }
    let series = load_series(run)?;
    run.write("series.csv", &write_series(&series))
}

/// Runs the configured command and writes its manifest.
pub fn execute(cfg: RunConfig) -> Res<RunManifest> {
    match cfg.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(input)?;
            pool.install(|| execute_here(cfg))
        }
        None => execute_here(cfg),
    }
}

fn execute_here(cfg: RunConfig) -> Res<RunManifest> {
    let started = Instant::now();
    fs::create_dir_all(&cfg.out)
        .map_err(|e| input(anyhow!("cannot create {}: {e}", cfg.out.display())))?;
    if let Some(eps) = cfg.eps {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(input(anyhow!("--eps must be non-negative, got {eps}")));
        }
    }
    if !(cfg.gamma > 0.0 && cfg.gamma.is_finite()) {
        return Err(input(anyhow!("--gamma must be positive, got {}", cfg.gamma)));
    }
    let mut run = Run {
        cfg,
        inputs: Vec::new(),
        outputs: Vec::new(),
        notes: Vec::new(),
        summary: Map::new(),
    };
    match run.cfg.command.clone() {
        CommandConfig::Mix => cmd_mix(&mut run)?,
        CommandConfig::Dispatch { layout } => cmd_dispatch(&mut run, &layout)?,
        CommandConfig::Sweep {
            family,
            params,
            present,
            q99,
            unconstrained_flows,
        } => cmd_sweep(&mut run, family, &params, &present, &q99, unconstrained_flows)?,
        CommandConfig::QuantileLayout {
            c,
            unconstrained_flows,
        } => cmd_quantile_layout(&mut run, c, unconstrained_flows)?,
        CommandConfig::Report { layouts, bin_width } => cmd_report(&mut run, &layouts, bin_width)?,
        CommandConfig::Synth => cmd_synth(&mut run)?,
    }
    let manifest = RunManifest {
        tool: "eurobalance".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: run.cfg.clone(),
        inputs: run.inputs,
        outputs: run.outputs,
        elapsed_seconds: started.elapsed().as_secs_f64(),
        summary: run.summary,
        notes: run.notes,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(input)?;
    text.push('\n');
    let path = manifest.config.out.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| input(anyhow!("cannot write {}: {e}", path.display())))?;
    Ok(manifest)
}

/// Re-runs the command recorded in a manifest after checking that none of
/// its inputs changed.
pub fn replay(manifest: &Path, out: Option<PathBuf>) -> Res<RunManifest> {
    let recorded = RunManifest::read(manifest).map_err(input)?;
    recorded.verify_inputs(builtin).map_err(input)?;
    let mut cfg = recorded.config;
    if let Some(out) = out {
        cfg.out = out;
    }
    execute(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use eurobalance::optim::SolveStatus;

    #[test]
    fn solver_failures_and_input_errors_get_distinct_codes() {
        let solver = || DispatchError::Solver {
            stage: "lp",
            hour: 3,
            status: SolveStatus::NumericalFailure,
        };
        assert_eq!(dispatch_failure(solver()).code, EXIT_SOLVER);
        assert_eq!(dispatch_failure(DispatchError::Empty).code, EXIT_INPUT);
        assert_eq!(dispatch_failure(DispatchError::InvalidEps(-1.0)).code, EXIT_INPUT);
        let nested = MetricsError::SweepPoint {
            param: 0.5,
            source: Box::new(MetricsError::Dispatch(solver())),
        };
        assert_eq!(metrics_failure(nested).code, EXIT_SOLVER);
        assert_eq!(metrics_failure(MetricsError::Empty).code, EXIT_INPUT);
        assert!(builtin("europe-topology").is_some());
        assert!(builtin("layout-q99").is_some());
        assert!(builtin("layout-nope").is_none());
    }
}
