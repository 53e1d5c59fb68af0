//! Run configuration: a flat TOML file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use gmcf_core::{Error, FlowParams, Slope};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::failure::Failure;

pub const SCHEMA_VERSION: &str = "gmcf/1";

/// Environment variable that overrides the output root.
pub const OUT_ENV: &str = "GMCF_OUT";

pub const DEFAULT_SEED: u64 = gmcf_verify::DEFAULT_SEED;

/// Every key the config file may hold. Flags use the same names with dashes.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Output directory [default: $GMCF_OUT or ./gmcf-out]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Seed for perturbation generators and the verification suite
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Space dimension N [default: 2]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    /// Power alpha [default: 1]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Odd power as q/p (odd q and p), needed when H can change sign
    #[arg(long, value_name = "Q/P")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_odd: Option<String>,
    /// Forcing b
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Translation speed c
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Boundary slope k
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    /// Infinite boundary slope, + or -
    #[arg(long, value_name = "+|-", allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_inf: Option<String>,
    /// Largest radius for profile integration
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    /// Grid intervals on [0, 1] [default: 256]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Final time [default: 10]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    /// Initial data: ts, quadratic, perturbed-ts or cap
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Initial data from a CSV file with columns r,u
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u0: Option<PathBuf>,
    /// Amplitude of the (1 - r^2)^2 bump for perturbed-ts [default: drawn from the seed]
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bump: Option<f64>,
    /// Spacing of convergence and estimate samples [default: 0.05]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_every: Option<f64>,
    /// Spacing of trajectory snapshots [default: 0.5]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<f64>,
    /// Evolve even when no hypothesis case holds
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allow_unmet: Option<bool>,
    /// Count intersections with the translating family at this speed
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monitor_c: Option<f64>,
    /// Sweep kind: speed (grid over b, k) or profile (grid over c, b)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<String>,
    /// Sweep values of b: from:to:count or a comma list
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_values: Option<String>,
    /// Sweep values of k
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_values: Option<String>,
    /// Sweep values of c
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_values: Option<String>,
    /// Worker threads for sweep [default: available parallelism]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    /// Criteria to run, by name or number (repeatable or comma separated)
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub only: Option<Vec<String>>,
    /// Coarse grids and short runs
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quick: Option<bool>,
}

impl Settings {
    /// Reads `file` (if any) and overlays the flags.
    pub fn resolve(file: Option<&Path>, flags: &Settings) -> Result<Settings, Failure> {
        let mut base = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Failure::usage(format!("cannot read config {}: {e}", path.display()))
                })?;
                let parsed: Settings = toml::from_str(&text).map_err(|e| {
                    Failure::usage(format!("config {}: {}", path.display(), e.message()))
                })?;
                serde_json::to_value(parsed).map_err(Failure::internal)?
            }
            None => Value::Object(Default::default()),
        };
        let over = serde_json::to_value(flags).map_err(Failure::internal)?;
        if let (Value::Object(b), Value::Object(o)) = (&mut base, over) {
            b.extend(o);
        }
        let mut s: Settings = serde_json::from_value(base).map_err(Failure::internal)?;
        s.out = Some(resolve_out(s.out.take())?);
        s.seed.get_or_insert(DEFAULT_SEED);
        if let Some(u0) = &s.u0 {
            s.u0 = Some(std::path::absolute(u0)?);
        }
        Ok(s)
    }

    pub fn out_dir(&self) -> &Path {
        self.out.as_deref().unwrap_or(Path::new("."))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    /// `FlowParams` from `n`, `alpha` / `alpha_odd`, `b` and the slope if given.
    pub fn flow(&self) -> Result<FlowParams, Error> {
        let n = self.n.unwrap_or(2);
        let b = self
            .b
            .ok_or_else(|| Error::InvalidInput("--b is required".into()))?;
        let mut p = match &self.alpha_odd {
            Some(s) => {
                let (q, pp) = parse_ratio(s)?;
                let p = FlowParams::odd(n, q, pp, b)?;
                if let Some(a) = self.alpha {
                    if (a - p.alpha).abs() > 1e-12 * p.alpha {
                        return Err(Error::InvalidInput(format!(
                            "--alpha {a} disagrees with --alpha-odd {s}"
                        )));
                    }
                }
                p
            }
            None => FlowParams::new(n, self.alpha.unwrap_or(1.0), b)?,
        };
        if let Some(k) = self.slope()? {
            p = p.with_k(k);
        }
        Ok(p)
    }

    pub fn slope(&self) -> Result<Option<Slope>, Error> {
        match (self.k, self.k_inf.as_deref()) {
            (Some(_), Some(_)) => Err(Error::InvalidInput(
                "give either --k or --k-inf, not both".into(),
            )),
            (Some(k), None) => Ok(Some(Slope::Finite(k))),
            (None, Some("+") | Some("+inf")) => Ok(Some(Slope::PosInfinity)),
            (None, Some("-") | Some("-inf")) => Ok(Some(Slope::NegInfinity)),
            (None, Some(other)) => Err(Error::InvalidInput(format!(
                "--k-inf takes + or -, got '{other}'"
            ))),
            (None, None) => Ok(None),
        }
    }
}

fn resolve_out(flag_or_file: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let chosen = match flag_or_file {
        Some(p) => p,
        None => std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("gmcf-out")),
    };
    Ok(std::path::absolute(chosen)?)
}

fn parse_ratio(s: &str) -> Result<(u32, u32), Error> {
    let bad = || {
        Error::InvalidInput(format!(
            "--alpha-odd expects q/p with positive integers, got '{s}'"
        ))
    };
    let (q, p) = s.split_once('/').ok_or_else(bad)?;
    Ok((
        q.trim().parse().map_err(|_| bad())?,
        p.trim().parse().map_err(|_| bad())?,
    ))
}

/// `from:to:count` (inclusive, evenly spaced) or `v1,v2,...`.
pub fn parse_values(spec: &str) -> Result<Vec<f64>, Error> {
    let bad = |why: &str| Error::InvalidInput(format!("bad value list '{spec}': {why}"));
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((from, rest)) = spec.split_once(':') {
        let (to, count) = rest
            .split_once(':')
            .ok_or_else(|| bad("expected from:to:count"))?;
        let from: f64 = from.trim().parse().map_err(|_| bad("from"))?;
        let to: f64 = to.trim().parse().map_err(|_| bad("to"))?;
        let count: usize = count.trim().parse().map_err(|_| bad("count"))?;
        return Ok(match count {
            0 => Vec::new(),
            1 => vec![from],
            _ => (0..count)
                .map(|i| from + (to - from) * i as f64 / (count - 1) as f64)
                .collect(),
        });
    }
    spec.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad(v)))
        .collect()
}
