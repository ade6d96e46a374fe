//! Run configuration and the manifest written next to every output.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use eurobalance::metrics::Family;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaPolicy {
    /// Each country uses the wind share minimising its own residual load.
    Optimal,
    Fixed(f64),
}

impl FromStr for AlphaPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "optimal" {
            return Ok(AlphaPolicy::Optimal);
        }
        match s.parse::<f64>() {
            Ok(a) if (0.0..=1.0).contains(&a) => Ok(AlphaPolicy::Fixed(a)),
            _ => Err(format!("expected `optimal` or a number in [0, 1], got {s:?}")),
        }
    }
}

impl fmt::Display for AlphaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaPolicy::Optimal => write!(f, "optimal"),
            AlphaPolicy::Fixed(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesSource {
    File(PathBuf),
    Synth {
        seed: u64,
        hours: usize,
        /// Shipped configuration when absent.
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum CommandConfig {
    Mix,
    Dispatch {
        layout: String,
    },
    Sweep {
        family: Family,
        params: Vec<f64>,
        present: String,
        q99: String,
        unconstrained_flows: Option<PathBuf>,
    },
    QuantileLayout {
        c: f64,
        unconstrained_flows: Option<PathBuf>,
    },
    Report {
        layouts: Vec<String>,
        bin_width: f64,
    },
    Synth,
}

impl CommandConfig {
    pub fn name(&self) -> &'static str {
        match self {
            CommandConfig::Mix => "mix",
            CommandConfig::Dispatch { .. } => "dispatch",
            CommandConfig::Sweep { .. } => "sweep",
            CommandConfig::QuantileLayout { .. } => "quantile-layout",
            CommandConfig::Report { .. } => "report",
            CommandConfig::Synth => "synth",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandConfig,
    /// Shipped European network when absent.
    pub topology: Option<PathBuf>,
    pub series: SeriesSource,
    pub gamma: f64,
    pub alpha: AlphaPolicy,
    pub eps: Option<f64>,
    pub threads: Option<usize>,
    pub out: PathBuf,
}

/// Content digest of one input or output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Digest256 {
    pub role: String,
    /// File path, or `builtin:<name>` for shipped data.
    pub source: String,
    pub sha256: String,
}

impl Digest256 {
    pub fn of(role: &str, source: impl Into<String>, content: &[u8]) -> Self {
        Self {
            role: role.into(),
            source: source.into(),
            sha256: sha256_hex(content),
        }
    }
}

pub fn sha256_hex(content: &[u8]) -> String {
    hex::encode(Sha256::digest(content))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub inputs: Vec<Digest256>,
    pub outputs: Vec<Digest256>,
    pub elapsed_seconds: f64,
    pub summary: serde_json::Map<String, serde_json::Value>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read manifest {}: {e}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Recomputes the digest of every file input; shipped inputs are checked
    /// against the data compiled into this binary.
    pub fn verify_inputs(&self, builtin: impl Fn(&str) -> Option<&'static str>) -> anyhow::Result<()> {
        for d in &self.inputs {
            let content: Vec<u8> = match d.source.strip_prefix("builtin:") {
                Some(name) => builtin(name)
                    .ok_or_else(|| anyhow::anyhow!("unknown shipped input {name}"))?
                    .as_bytes()
                    .to_vec(),
                None => fs::read(&d.source)
                    .map_err(|e| anyhow::anyhow!("input {} unreadable: {e}", d.source))?,
            };
            if sha256_hex(&content) != d.sha256 {
                anyhow::bail!("input {} ({}) changed since the recorded run", d.source, d.role);
            }
        }
        Ok(())
    }
}
