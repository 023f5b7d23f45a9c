use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use qosc_core::Precision;

#[derive(Debug, Parser)]
#[command(name = "qosc", version, about = "q-deformed anharmonic oscillator: series, bounds and oracle")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Low eigenvalues of the truncated Hamiltonian
    Spectrum,
    /// Matrix elements of X⁴ and H'
    Melem,
    /// Self-consistent perturbation series for one level
    Series,
    /// Convergence radius, C(q) and n_max
    Radius,
    /// Radius of the ground-state series over a q grid
    Figure1,
    /// Diagonal of H' over levels for a q grid
    Figure2,
    /// Series energy compared against diagonalization
    Oracle,
    /// Run the inequality certificates
    Check,
    /// Undeformed ground-state terms, which grow without bound
    Diverge,
}

#[derive(Debug, Default, clap::Args)]
pub struct Flags {
    #[arg(long, global = true)]
    pub q: Option<f64>,
    #[arg(long, global = true)]
    pub omega: Option<f64>,
    #[arg(long, global = true)]
    pub mass: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// Level or inclusive range `a:b`
    #[arg(long, global = true)]
    pub n: Option<LevelRange>,
    /// q grid `min:max:steps`
    #[arg(long, global = true)]
    pub grid: Option<Grid>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true, value_enum)]
    pub precision: Option<PrecisionArg>,
    /// Allow parameters outside the certified domain; results are flagged
    #[arg(long, global = true)]
    pub no_certify: bool,
    /// key=value file; flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Eigensolver used by the oracle
    #[arg(long, global = true)]
    pub solver: Option<String>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Fixed series order instead of the majorant-driven choice
    #[arg(long, global = true)]
    pub max_order: Option<usize>,
    /// Truncation for `spectrum` instead of a stability scan
    #[arg(long, global = true)]
    pub levels: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    Double,
    Extended,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Double => Precision::Double,
            PrecisionArg::Extended => Precision::Extended,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelRange {
    pub first: usize,
    pub last: usize,
}

impl LevelRange {
    pub fn single(n: usize) -> Self {
        Self { first: n, last: n }
    }

    pub fn iter(&self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.last
    }
}

impl FromStr for LevelRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("bad level `{t}`: {e}"));
        let r = match s.split_once(':') {
            None => Self::single(parse(s)?),
            Some((a, b)) => Self {
                first: parse(a)?,
                last: parse(b)?,
            },
        };
        if r.first > r.last {
            return Err(format!("empty level range `{s}`"));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Grid {
    pub const fn new(min: f64, max: f64, steps: usize) -> Self {
        Self { min, max, steps }
    }

    /// Endpoints included; evaluated as `min + (max-min)·i/(steps-1)`.
    pub fn points(&self) -> Vec<f64> {
        let span = self.max - self.min;
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| if i + 1 == self.steps { self.max } else { self.min + span * i as f64 / last })
            .collect()
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts.as_slice() else {
            return Err(format!("grid must be min:max:steps (got `{s}`)"));
        };
        let min: f64 = a.trim().parse().map_err(|e| format!("bad grid min `{a}`: {e}"))?;
        let max: f64 = b.trim().parse().map_err(|e| format!("bad grid max `{b}`: {e}"))?;
        let steps: usize = n.trim().parse().map_err(|e| format!("bad grid steps `{n}`: {e}"))?;
        if steps < 2 {
            return Err(format!("grid needs at least 2 steps (got {steps})"));
        }
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(format!("grid needs finite min < max (got {min}, {max})"));
        }
        Ok(Self { min, max, steps })
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.min, self.max, self.steps)
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub q: Option<f64>,
    pub omega: f64,
    pub mass: f64,
    pub gamma: Option<f64>,
    pub n: Option<LevelRange>,
    pub grid: Option<Grid>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub precision: Option<Precision>,
    pub certify: bool,
    pub solver: String,
    pub tol: f64,
    pub max_order: Option<usize>,
    pub levels: Option<usize>,
}

const KEYS: &[&str] = &[
    "q", "omega", "mass", "gamma", "n", "grid", "out", "format", "precision", "no-certify", "solver", "tol",
    "max-order", "levels",
];

/// `key=value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key=value, got `{}`", i + 1, raw.trim());
        };
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            bail!("config line {}: unknown key `{key}`", i + 1);
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

fn load_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config_text(&text).with_context(|| format!("in config {}", path.display()))
}

fn from_file<T: FromStr>(file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    file.get(key)
        .map(|v| v.parse::<T>().map_err(|e| anyhow::anyhow!("config key `{key}`: {e}")))
        .transpose()
}

fn parse_bool(v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => bail!("expected a boolean, got `{v}`"),
    }
}

impl RunConfig {
    pub fn resolve(command: Command, flags: Flags) -> Result<Self> {
        let file = match &flags.config {
            Some(p) => load_config(p)?,
            None => BTreeMap::new(),
        };
        let format = match flags.format {
            Some(f) => f,
            None => match file.get("format") {
                Some(v) => Format::from_str(v, true).map_err(|e| anyhow::anyhow!("config key `format`: {e}"))?,
                None => Format::Csv,
            },
        };
        let precision = match flags.precision {
            Some(p) => Some(p.into()),
            None => match file.get("precision") {
                Some(v) => Some(
                    PrecisionArg::from_str(v, true)
                        .map_err(|e| anyhow::anyhow!("config key `precision`: {e}"))?
                        .into(),
                ),
                None => None,
            },
        };
        let no_certify = flags.no_certify
            || match file.get("no-certify") {
                Some(v) => parse_bool(v).context("config key `no-certify`")?,
                None => false,
            };
        let cfg = Self {
            command,
            q: flags.q.map_or_else(|| from_file(&file, "q"), |v| Ok(Some(v)))?,
            omega: flags.omega.map_or_else(|| from_file(&file, "omega"), |v| Ok(Some(v)))?.unwrap_or(1.0),
            mass: flags.mass.map_or_else(|| from_file(&file, "mass"), |v| Ok(Some(v)))?.unwrap_or(1.0),
            gamma: flags.gamma.map_or_else(|| from_file(&file, "gamma"), |v| Ok(Some(v)))?,
            n: flags.n.map_or_else(|| from_file(&file, "n"), |v| Ok(Some(v)))?,
            grid: flags.grid.map_or_else(|| from_file(&file, "grid"), |v| Ok(Some(v)))?,
            out: flags.out.map_or_else(|| from_file(&file, "out"), |v| Ok(Some(v)))?,
            format,
            precision,
            certify: !no_certify,
            solver: flags
                .solver
                .or_else(|| file.get("solver").cloned())
                .unwrap_or_else(|| qosc_core::oracle::DEFAULT_SOLVER.to_string()),
            tol: flags.tol.map_or_else(|| from_file(&file, "tol"), |v| Ok(Some(v)))?.unwrap_or(1e-9),
            max_order: flags.max_order.map_or_else(|| from_file(&file, "max-order"), |v| Ok(Some(v)))?,
            levels: flags.levels.map_or_else(|| from_file(&file, "levels"), |v| Ok(Some(v)))?,
        };
        if !(cfg.tol > 0.0) {
            bail!("--tol must be positive (got {})", cfg.tol);
        }
        Ok(cfg)
    }
}
