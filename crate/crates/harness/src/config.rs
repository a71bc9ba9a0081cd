//! Flat `key = value` configuration with `[experiment NAME]` blocks.
//! The full key reference is in `docs/config-reference.md`.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use svgp_core::kernels::{DensitySpec, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    FixedM,
    MSweep,
    LogSchedule,
    Dispersion,
}

impl Kind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "fixed-m" => Self::FixedM,
            "m-sweep" => Self::MSweep,
            "log-schedule" => Self::LogSchedule,
            "dispersion" => Self::Dispersion,
            _ => bail!("unknown experiment kind {s:?}"),
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::FixedM => "fixed-m",
            Self::MSweep => "m-sweep",
            Self::LogSchedule => "log-schedule",
            Self::Dispersion => "dispersion",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MRule {
    /// One or more explicit values.
    List(Vec<usize>),
    /// `⌈C log N + C₀⌉`.
    Log { c: f64, c0: f64 },
    /// `⌈C log N⌉` with `C = (3+γ)/log(1/B)` from the SE spectrum.
    LogAuto,
    /// The full SE schedule including its intercept.
    ScheduleSe,
    /// `⌈N^α⌉`.
    Power(f64),
}

impl MRule {
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("log:") {
            if rest == "auto" {
                return Ok(Self::LogAuto);
            }
            let parts = parse_floats(rest)?;
            return match parts.as_slice() {
                [c] => Ok(Self::Log { c: *c, c0: 0.0 }),
                [c, c0] => Ok(Self::Log { c: *c, c0: *c0 }),
                _ => bail!("log rule takes C or C,C0"),
            };
        }
        if let Some(rest) = s.strip_prefix("power:") {
            let a: f64 = rest.trim().parse().with_context(|| format!("bad exponent {rest:?}"))?;
            if !(a > 0.0 && a <= 1.0) {
                bail!("power exponent must lie in (0, 1]");
            }
            return Ok(Self::Power(a));
        }
        if s == "schedule-se" {
            return Ok(Self::ScheduleSe);
        }
        let list = parse_usizes(s)?;
        if list.is_empty() {
            bail!("empty M list");
        }
        Ok(Self::List(list))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    PointsKdpp,
    PointsUniform,
    PointsGreedy,
    Eigvec,
    Eigfunc,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "points-kdpp" => Self::PointsKdpp,
            "points-uniform" => Self::PointsUniform,
            "points-greedy" => Self::PointsGreedy,
            "eigvec" => Self::Eigvec,
            "eigfunc" => Self::Eigfunc,
            _ => bail!("unknown inducing method {s:?}"),
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::PointsKdpp => "points-kdpp",
            Self::PointsUniform => "points-uniform",
            Self::PointsGreedy => "points-greedy",
            Self::Eigvec => "eigvec",
            Self::Eigfunc => "eigfunc",
        }
    }

    /// Whether the sets for increasing `M` are nested.
    pub fn nested(self) -> bool {
        matches!(self, Self::PointsGreedy | Self::Eigvec | Self::Eigfunc)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainSteps {
    /// `min(mixing_steps(N, M, ε), cap)`.
    Mixing,
    /// `N · M`.
    NM,
    Fixed(u64),
}

/// Cap on the mixing-time budget.
pub const CHAIN_STEP_CAP: u64 = 20_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum InputDist {
    Density(DensitySpec),
    /// Equal-weight mixture of one-dimensional normals.
    Clusters { centers: Vec<f64>, std: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: Kind,
    pub kernel: KernelSpec,
    pub inputs: InputDist,
    pub noise: f64,
    pub n_grid: Vec<usize>,
    pub m_rule: MRule,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub replicates: usize,
    /// `None` means `N⁻³`.
    pub epsilon: Option<f64>,
    pub chain_steps: ChainSteps,
    pub delta: f64,
    pub gamma: f64,
    pub quadrature: usize,
    pub kdpp_lengthscales: Vec<f64>,
    /// Diagonal added to the selection kernel, in units of the kernel variance.
    pub selection_nugget: f64,
    pub log_marginal: bool,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub dense_limit: Option<usize>,
    pub experiments: Vec<ExperimentConfig>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut dense_limit = None;
        let mut blocks: Vec<Block> = Vec::new();
        let mut global_keys = HashSet::new();
        for (no, raw) in text.lines().enumerate() {
            let lineno = no + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('[') {
                let header = header
                    .strip_suffix(']')
                    .ok_or_else(|| anyhow!("line {lineno}: unterminated section header"))?;
                let mut words = header.split_whitespace();
                match (words.next(), words.next(), words.next()) {
                    (Some("experiment"), Some(name), None) => {
                        if blocks.iter().any(|b| b.name == name) {
                            bail!("line {lineno}: duplicate experiment {name:?}");
                        }
                        if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                            bail!("line {lineno}: experiment names may use letters, digits, '-' and '_'");
                        }
                        blocks.push(Block {
                            name: name.to_string(),
                            line: lineno,
                            entries: Vec::new(),
                        });
                    }
                    _ => bail!("line {lineno}: expected [experiment NAME]"),
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {lineno}: expected key = value"))?;
            let (key, value) = (key.trim(), value.trim());
            match blocks.last_mut() {
                None => {
                    if !global_keys.insert(key.to_string()) {
                        bail!("line {lineno}: duplicate key {key:?}");
                    }
                    match key {
                        "dense_limit" => {
                            dense_limit =
                                Some(value.parse().with_context(|| format!("line {lineno}: bad dense_limit"))?)
                        }
                        _ => bail!("line {lineno}: unknown global key {key:?}"),
                    }
                }
                Some(block) => {
                    if block.entries.iter().any(|(k, _, _)| k == key) {
                        bail!("line {lineno}: duplicate key {key:?}");
                    }
                    block.entries.push((key.to_string(), value.to_string(), lineno));
                }
            }
        }
        let experiments = blocks.into_iter().map(Block::into_config).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dense_limit,
            experiments,
        })
    }

    pub fn of_kind(&self, kind: Kind) -> Vec<&ExperimentConfig> {
        self.experiments.iter().filter(|e| e.kind == kind).collect()
    }
}

struct Block {
    name: String,
    line: usize,
    entries: Vec<(String, String, usize)>,
}

const KEYS: &[&str] = &[
    "kind",
    "kernel",
    "variance",
    "lengthscale",
    "density",
    "density_mean",
    "density_std",
    "density_lo",
    "density_hi",
    "cluster_centers",
    "cluster_std",
    "noise",
    "n",
    "m",
    "method",
    "seeds",
    "replicates",
    "epsilon",
    "chain_steps",
    "delta",
    "gamma",
    "quadrature",
    "kdpp_lengthscales",
    "selection_nugget",
    "log_marginal",
    "output",
];

impl Block {
    fn get(&self, key: &str) -> Option<(&str, usize)> {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
    }

    fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some((v, l)) => v.parse().map_err(|_| anyhow!("line {l}: bad value {v:?} for {key}")),
        }
    }

    fn into_config(self) -> Result<ExperimentConfig> {
        for (k, _, l) in &self.entries {
            if !KEYS.contains(&k.as_str()) {
                bail!("line {l}: unknown key {k:?} in experiment {:?}", self.name);
            }
        }
        let ctx = |e: anyhow::Error| e.context(format!("experiment {:?} (line {})", self.name, self.line));
        self.build().map_err(ctx)
    }

    fn build(&self) -> Result<ExperimentConfig> {
        let kind = Kind::parse(self.get("kind").ok_or_else(|| anyhow!("missing kind"))?.0)?;
        let variance: f64 = self.parse_or("variance", 1.0)?;
        let lengthscale: f64 = self.parse_or("lengthscale", 1.0)?;
        let kernel = kernel_from_name(self.get("kernel").map_or("se", |v| v.0), variance, lengthscale)?;
        let inputs = match self.get("density").map_or("gaussian", |v| v.0) {
            "gaussian" => InputDist::Density(DensitySpec::gaussian_1d(
                self.parse_or("density_mean", 0.0)?,
                self.parse_or("density_std", 1.0)?,
            )?),
            "uniform" => InputDist::Density(DensitySpec::uniform_1d(
                self.parse_or("density_lo", 0.0)?,
                self.parse_or("density_hi", 1.0)?,
            )?),
            "clusters" => {
                let centers = parse_floats(self.get("cluster_centers").ok_or_else(|| anyhow!("missing cluster_centers"))?.0)?;
                let std: f64 = self.parse_or("cluster_std", 0.3)?;
                if centers.is_empty() || std.is_nan() || std <= 0.0 {
                    bail!("clusters need at least one center and a positive cluster_std");
                }
                InputDist::Clusters { centers, std }
            }
            other => bail!("unknown density {other:?}"),
        };
        let noise: f64 = self.parse_or("noise", 1.0)?;
        if noise.is_nan() || noise <= 0.0 {
            bail!("noise must be positive");
        }
        let n_grid = parse_usizes(self.get("n").ok_or_else(|| anyhow!("missing n"))?.0)?;
        if n_grid.is_empty() || n_grid.contains(&0) {
            bail!("n grid must be nonempty and positive");
        }
        let m_rule = MRule::parse(self.get("m").ok_or_else(|| anyhow!("missing m"))?.0)?;
        let methods = self
            .get("method")
            .map_or("points-kdpp", |v| v.0)
            .split(',')
            .map(|s| Method::parse(s.trim()))
            .collect::<Result<Vec<_>>>()?;
        let seeds = parse_seeds(self.get("seeds").map_or("0..10", |v| v.0))?;
        let epsilon = match self.get("epsilon").map_or("auto", |v| v.0) {
            "auto" => None,
            v => {
                let e: f64 = v.parse().map_err(|_| anyhow!("bad epsilon {v:?}"))?;
                if !(e > 0.0 && e < 1.0) {
                    bail!("epsilon must lie in (0, 1)");
                }
                Some(e)
            }
        };
        let chain_steps = match self.get("chain_steps").map_or("mixing", |v| v.0) {
            "mixing" => ChainSteps::Mixing,
            "nm" => ChainSteps::NM,
            v => ChainSteps::Fixed(v.parse().map_err(|_| anyhow!("bad chain_steps {v:?}"))?),
        };
        let delta: f64 = self.parse_or("delta", 0.1)?;
        if !(delta > 0.0 && delta < 1.0) {
            bail!("delta must lie in (0, 1)");
        }
        let kdpp_lengthscales = parse_floats(self.get("kdpp_lengthscales").map_or("2,0.5", |v| v.0))?;
        let selection_nugget: f64 = self.parse_or("selection_nugget", 0.0)?;
        if !(selection_nugget >= 0.0 && selection_nugget.is_finite()) {
            bail!("selection_nugget must be finite and nonnegative");
        }
        Ok(ExperimentConfig {
            name: self.name.clone(),
            kind,
            kernel,
            inputs,
            noise,
            n_grid,
            m_rule,
            methods,
            seeds,
            replicates: self.parse_or("replicates", 0)?,
            epsilon,
            chain_steps,
            delta,
            gamma: self.parse_or("gamma", 1.0)?,
            quadrature: self.parse_or("quadrature", 256)?,
            kdpp_lengthscales,
            selection_nugget,
            log_marginal: self.parse_or("log_marginal", false)?,
            output: self.get("output").map_or_else(|| self.name.clone(), |v| v.0.to_string()),
        })
    }
}

pub fn kernel_from_name(name: &str, variance: f64, lengthscale: f64) -> Result<KernelSpec> {
    Ok(match name {
        "se" => KernelSpec::squared_exponential(variance, lengthscale)?,
        "matern12" => KernelSpec::matern(0, variance, lengthscale)?,
        "matern32" => KernelSpec::matern(1, variance, lengthscale)?,
        "matern52" => KernelSpec::matern(2, variance, lengthscale)?,
        _ => bail!("unknown kernel {name:?}"),
    })
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| anyhow!("bad number {p:?}")))
        .collect()
}

fn parse_usizes(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| anyhow!("bad integer {p:?}")))
        .collect()
}

/// `a..b` (half-open) or a comma list.
fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| anyhow!("bad seed range {s:?}"))?;
        let b: u64 = b.trim().parse().map_err(|_| anyhow!("bad seed range {s:?}"))?;
        (a..b).collect()
    } else {
        s.split(',')
            .map(|p| p.trim().parse().map_err(|_| anyhow!("bad seed {p:?}")))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        bail!("seed list is empty");
    }
    let distinct: HashSet<_> = seeds.iter().collect();
    if distinct.len() != seeds.len() {
        bail!("seeds must be distinct");
    }
    Ok(seeds)
}

/// Settings used when no `--config` is given.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.conf");
