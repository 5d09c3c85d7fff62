use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dynamics::{CaVariant, DynamicsConfig, KwCoupling, Method, Task};
use crate::error::{Error, Result};
use crate::state::KernelConfig;
use crate::targets::GpPrior;

/// Keys accepted in a config file.
pub const CONFIG_KEYS: [&str; 23] = [
    "method",
    "target",
    "particles",
    "iterations",
    "record_every",
    "seed",
    "init_mean",
    "init_var",
    "reference_samples",
    "data_path",
    "synthetic_points",
    "gp_prior",
    "timing",
    "eta_pos",
    "eta_vel",
    "eta_wei",
    "gamma",
    "lambda_kw",
    "warmup",
    "ca_variant",
    "kw_coupling",
    "bandwidth",
    "w2",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetSpec {
    /// Correlated Gaussian of the given dimension.
    Sg(usize),
    /// Two-component isotropic mixture of the given dimension.
    Gmm(usize),
    /// GP hyperparameter posterior (2-D).
    Gp,
}

impl TargetSpec {
    pub fn task(self) -> Task {
        match self {
            TargetSpec::Sg(_) => Task::SingleGaussian,
            TargetSpec::Gmm(_) => Task::Mixture,
            TargetSpec::Gp => Task::GaussianProcess,
        }
    }

    pub fn dim(self) -> usize {
        match self {
            TargetSpec::Sg(d) | TargetSpec::Gmm(d) => d,
            TargetSpec::Gp => 2,
        }
    }
}

impl fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetSpec::Sg(d) => write!(f, "sg:{d}"),
            TargetSpec::Gmm(d) => write!(f, "gmm:{d}"),
            TargetSpec::Gp => f.write_str("gp"),
        }
    }
}

impl FromStr for TargetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "unknown target '{s}' (valid: sg10, sg:<d>, gmm10, gmm:<d>, gp)"
            ))
        };
        let dim = |d: &str| -> Result<usize> {
            match d.parse::<usize>() {
                Ok(d) if d >= 1 => Ok(d),
                _ => Err(bad()),
            }
        };
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "sg10" => Ok(TargetSpec::Sg(10)),
            "gmm10" => Ok(TargetSpec::Gmm(10)),
            "gp" => Ok(TargetSpec::Gp),
            _ => {
                if let Some(d) = s.strip_prefix("sg:") {
                    Ok(TargetSpec::Sg(dim(d)?))
                } else if let Some(d) = s.strip_prefix("gmm:") {
                    Ok(TargetSpec::Gmm(dim(d)?))
                } else {
                    Err(bad())
                }
            }
        }
    }
}

/// Where GP observations come from.
#[derive(Clone, Debug, PartialEq)]
pub enum GpSource {
    File(PathBuf),
    /// Seeded synthetic scan with this many points.
    Synthetic(usize),
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub target: TargetSpec,
    pub particles: usize,
    pub iterations: u64,
    pub record_every: u64,
    pub seed: u64,
    pub init_mean: Vec<f64>,
    pub init_var: f64,
    pub reference_samples: usize,
    pub gp_source: Option<GpSource>,
    pub gp_prior: GpPrior,
    /// Fill the `wall_seconds` column (makes output machine-dependent).
    pub timing: bool,
    /// Compute W2 against reference samples at record points.
    pub w2: bool,
    pub dynamics: DynamicsConfig,
}

impl ExperimentConfig {
    /// Defaults for `method` on `target`: tuned step sizes and the standard initializations.
    pub fn new(method: Method, target: TargetSpec) -> Self {
        let task = target.task();
        let iterations = match task {
            Task::GaussianProcess => 10_000,
            _ => 2000,
        };
        let d = target.dim();
        let (init_mean, init_var) = match target {
            TargetSpec::Sg(_) => (vec![0.0; d], 0.5),
            TargetSpec::Gmm(_) => (vec![0.0; d], 1.0),
            TargetSpec::Gp => (vec![0.0, -10.0], 0.09),
        };
        let mut dynamics = method.default_config(task);
        dynamics.total_steps = iterations;
        Self {
            method,
            target,
            particles: 64,
            iterations,
            record_every: 100,
            seed: 0,
            init_mean,
            init_var,
            reference_samples: 2000,
            gp_source: None,
            gp_prior: GpPrior::default(),
            timing: false,
            w2: true,
            dynamics,
        }
    }

    /// Parses flat `key = value` lines; `#` starts a comment. `method` and `target` are required.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_path(text, None)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse_with_path(&text, Some(path))
    }

    fn parse_with_path(text: &str, path: Option<&Path>) -> Result<Self> {
        let at = |line: usize, message: String| match path {
            Some(p) => Error::Parse {
                path: p.to_path_buf(),
                line,
                message,
            },
            None => Error::Config(format!("line {line}: {message}")),
        };
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut order = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(at(idx + 1, format!("expected key = value, got '{line}'")));
            };
            let key = key.trim().to_ascii_lowercase();
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(at(idx + 1, format!("unknown key '{key}'")));
            }
            if entries
                .insert(key.clone(), (idx + 1, value.trim().to_string()))
                .is_some()
            {
                return Err(at(idx + 1, format!("duplicate key '{key}'")));
            }
            order.push(key);
        }
        let required = |k: &str| {
            entries
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Config(format!("missing required key '{k}'")))
        };
        let (mline, mval) = required("method")?;
        let method: Method = mval.parse().map_err(|e: Error| at(mline, e.to_string()))?;
        let (tline, tval) = required("target")?;
        let target: TargetSpec = tval.parse().map_err(|e: Error| at(tline, e.to_string()))?;
        let mut cfg = Self::new(method, target);
        for key in order {
            if key == "method" || key == "target" {
                continue;
            }
            let (line, value) = &entries[&key];
            cfg.set(&key, value).map_err(|e| at(*line, e.to_string()))?;
        }
        Ok(cfg)
    }

    /// Overrides one key (anything except `method` and `target`).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("{key}: '{v}' is not a number")))
        };
        let int = |v: &str| -> Result<u64> {
            v.parse::<u64>()
                .map_err(|_| Error::Config(format!("{key}: '{v}' is not a nonnegative integer")))
        };
        let boolean = |v: &str| -> Result<bool> {
            match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                _ => Err(Error::Config(format!("{key}: '{v}' is not a boolean"))),
            }
        };
        match key {
            "particles" => self.particles = int(value)? as usize,
            "iterations" => {
                self.iterations = int(value)?;
                self.dynamics.total_steps = self.iterations;
            }
            "record_every" => self.record_every = int(value)?,
            "seed" => self.seed = int(value)?,
            "init_mean" => {
                let parts = value
                    .split(',')
                    .map(|p| num(p.trim()))
                    .collect::<Result<Vec<_>>>()?;
                self.init_mean = match parts.len() {
                    1 => vec![parts[0]; self.target.dim()],
                    _ => parts,
                };
            }
            "init_var" => self.init_var = num(value)?,
            "reference_samples" => self.reference_samples = int(value)? as usize,
            "data_path" => self.gp_source = Some(GpSource::File(PathBuf::from(value))),
            "synthetic_points" => self.gp_source = Some(GpSource::Synthetic(int(value)? as usize)),
            "gp_prior" => {
                self.gp_prior = match value.to_ascii_lowercase().as_str() {
                    "none" => GpPrior::None,
                    "log1p" | "log1p_quadratic" => GpPrior::Log1pQuadratic,
                    _ => return Err(Error::Config(format!("gp_prior: unknown prior '{value}'"))),
                }
            }
            "timing" => self.timing = boolean(value)?,
            "w2" => self.w2 = boolean(value)?,
            "eta_pos" => self.dynamics.eta_pos = num(value)?,
            "eta_vel" => self.dynamics.eta_vel = num(value)?,
            "eta_wei" => self.dynamics.eta_wei = num(value)?,
            "gamma" => self.dynamics.gamma = num(value)?,
            "lambda_kw" => self.dynamics.lambda_kw = num(value)?,
            "warmup" => self.dynamics.warmup = boolean(value)?,
            "ca_variant" => self.dynamics.ca_variant = value.parse::<CaVariant>()?,
            "kw_coupling" => self.dynamics.kw_coupling = value.parse::<KwCoupling>()?,
            "bandwidth" => {
                self.dynamics.kernel = match value.to_ascii_lowercase().as_str() {
                    "nn" | "nearest_neighbor" => KernelConfig::NearestNeighbor,
                    _ => KernelConfig::fixed(num(value)?)?,
                }
            }
            "method" | "target" => {
                return Err(Error::Config(format!("{key} cannot be overridden; start from a new config")))
            }
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Pre-flight checks; returns non-fatal warnings from the dynamics configuration.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.particles == 0 {
            return Err(Error::Config("particles must be at least 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if self.init_mean.len() != self.target.dim() {
            return Err(Error::Config(format!(
                "init_mean has {} entries, target dimension is {}",
                self.init_mean.len(),
                self.target.dim()
            )));
        }
        if !(self.init_var >= 0.0) || !self.init_var.is_finite() {
            return Err(Error::Config(format!("init_var must be nonnegative, got {}", self.init_var)));
        }
        if self.target == TargetSpec::Gp && self.gp_source.is_none() {
            return Err(Error::Config(
                "the gp target needs data_path or synthetic_points".into(),
            ));
        }
        if self.dynamics.total_steps != self.iterations {
            return Err(Error::Config("dynamics horizon differs from iterations".into()));
        }
        self.dynamics.validate()
    }

    /// Iterations at which a record is taken: 0, every `record_every`, and the last.
    pub fn record_points(&self) -> Vec<u64> {
        let every = self.record_every.max(1);
        let mut pts: Vec<u64> = (0..=self.iterations).step_by(every as usize).collect();
        if pts.last() != Some(&self.iterations) {
            pts.push(self.iterations);
        }
        pts
    }
}
