//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 solver failure.

mod commands;
mod config;
mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eurobalance::metrics::Family;

use commands::{input, Failure, Res};
use config::{AlphaPolicy, CommandConfig, RunConfig, SeriesSource};

#[derive(Parser)]
#[command(name = "eurobalance", version, about = "Hourly dispatch with limited transmission between nodes")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["series", "synth_seed"]))]
struct Common {
    /// Link table `link_id,from_iso,to_iso`; the shipped European network by default.
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Series CSV `hour,L_<ISO>,W_<ISO>,S_<ISO>,...`.
    #[arg(long)]
    series: Option<PathBuf>,
    /// Generate synthetic series with this seed instead of reading a file.
    #[arg(long)]
    synth_seed: Option<u64>,
    /// Synthetic generator configuration (JSON); the shipped one by default.
    #[arg(long, requires = "synth_seed")]
    synth_config: Option<PathBuf>,
    /// Length of synthetic series in hours.
    #[arg(long, default_value_t = 8760)]
    hours: usize,
    /// Renewable penetration: mean generation over mean load.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Wind share: `optimal` per country, or a fixed value in [0, 1].
    #[arg(long, default_value = "optimal")]
    alpha: AlphaPolicy,
    /// Slack on minimal balancing when minimising flows, GW.
    #[arg(long)]
    eps: Option<f64>,
    /// Worker threads; all available cores by default.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    A,
    B,
    C,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::A => Family::A,
            FamilyArg::B => Family::B,
            FamilyArg::C => Family::C,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Wind share minimising each country's residual load, plus the aggregate.
    Mix {
        #[command(flatten)]
        common: Common,
    },
    /// Dispatch every hour under one layout and report the benefit.
    Dispatch {
        #[command(flatten)]
        common: Common,
        /// `zero`, `unlimited`, a shipped layout name or a layout CSV.
        #[arg(long, default_value = "present")]
        layout: String,
    },
    /// Balancing energy along an interpolation family of layouts.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// Strictly increasing parameters, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        params: Vec<f64>,
        /// Base layout of family A.
        #[arg(long, default_value = "present")]
        present: String,
        /// 99% quantile layout of families A and B; `derived` computes it
        /// from an unconstrained run of the same data.
        #[arg(long, default_value = "derived")]
        q99: String,
        /// Flows CSV of a stored unconstrained run.
        #[arg(long)]
        unconstrained_flows: Option<PathBuf>,
    },
    /// Directed layout from flow quantiles of an unconstrained run.
    QuantileLayout {
        #[command(flatten)]
        common: Common,
        /// Quantile level in percent, 50 to 100.
        #[arg(long)]
        c: f64,
        #[arg(long)]
        unconstrained_flows: Option<PathBuf>,
    },
    /// Per-country residual and excess after transmission, and histograms.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long = "layout", value_delimiter = ',', default_values_t = ["zero".to_string(), "present".to_string(), "q99".to_string(), "unlimited".to_string()])]
        layouts: Vec<String>,
        /// Histogram bin width in units of mean load.
        #[arg(long, default_value_t = 0.05)]
        bin_width: f64,
    },
    /// Write synthetic series to `series.csv`.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn absolute(path: &Path) -> Res<PathBuf> {
    path.canonicalize()
        .map_err(|e| input(anyhow::anyhow!("{}: {e}", path.display())))
}

/// Resolves `spec` to an absolute path unless it is a layout keyword.
fn layout_spec(spec: String) -> Res<String> {
    let keyword = matches!(spec.as_str(), "zero" | "unlimited" | "derived")
        || eurobalance::fixtures::ShippedLayout::from_name(&spec).is_some();
    if keyword {
        Ok(spec)
    } else {
        Ok(absolute(Path::new(&spec))?.display().to_string())
    }
}

fn optional(path: Option<PathBuf>) -> Res<Option<PathBuf>> {
    path.as_deref().map(absolute).transpose()
}

fn config(common: Common, command: CommandConfig) -> Res<RunConfig> {
    let series = match (common.series, common.synth_seed) {
        (Some(path), None) => SeriesSource::File(absolute(&path)?),
        (None, Some(seed)) => SeriesSource::Synth {
            seed,
            hours: common.hours,
            config: optional(common.synth_config)?,
        },
        _ => return Err(input(anyhow::anyhow!("give exactly one of --series and --synth-seed"))),
    };
    Ok(RunConfig {
        command,
        topology: optional(common.topology)?,
        series,
        gamma: common.gamma,
        alpha: common.alpha,
        eps: common.eps,
        threads: common.threads,
        out: common.out,
    })
}

fn run(cli: Cli) -> Res<()> {
    let manifest = match cli.command {
        Cmd::Replay { manifest, out } => commands::replay(&manifest, out)?,
        Cmd::Mix { common } => commands::execute(config(common, CommandConfig::Mix)?)?,
        Cmd::Dispatch { common, layout } => {
            let layout = layout_spec(layout)?;
            commands::execute(config(common, CommandConfig::Dispatch { layout })?)?
        }
        Cmd::Sweep {
            common,
            family,
            params,
            present,
            q99,
            unconstrained_flows,
        } => {
            let command = CommandConfig::Sweep {
                family: family.into(),
                params,
                present: layout_spec(present)?,
                q99: layout_spec(q99)?,
                unconstrained_flows: optional(unconstrained_flows)?,
            };
            commands::execute(config(common, command)?)?
        }
        Cmd::QuantileLayout {
            common,
            c,
            unconstrained_flows,
        } => {
            let command = CommandConfig::QuantileLayout {
                c,
                unconstrained_flows: optional(unconstrained_flows)?,
            };
            commands::execute(config(common, command)?)?
        }
        Cmd::Report {
            common,
            layouts,
            bin_width,
        } => {
            let layouts = layouts.into_iter().map(layout_spec).collect::<Res<Vec<_>>>()?;
            commands::execute(config(common, CommandConfig::Report { layouts, bin_width })?)?
        }
        Cmd::Synth { common } => commands::execute(config(common, CommandConfig::Synth)?)?,
    };
    for note in &manifest.notes {
        eprintln!("note: {note}");
    }
    println!(
        "{}: wrote {} files to {}",
        manifest.config.command.name(),
        manifest.outputs.len() + 1,
        manifest.config.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
