//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! epsilon = 1
//! gamma = 1000
//! dt = 1
//! n_trajectories = 10000
//! source_lo.concentration = 1.0
//! source_lo.entry = residual
//! ```
//!
//! Keys are parsed into a [`RawConfig`] first so that command-line overrides
//! go through the same validation as file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;
use uniflux_core::sampling::EntryKind;
use uniflux_core::sources::{source_strength, SourceError};
use uniflux_core::{
    DynamicsKind, EntryDistribution, ForceField, InjectionPolicy, ParamError, Side, SimParams, SourceSpec,
};

const SCALAR_KEYS: &[&str] = &[
    "epsilon",
    "gamma",
    "dt",
    "domain_lo",
    "domain_hi",
    "mode",
    "n_bins",
    "n_trajectories",
    "duration",
    "seed",
    "probes",
    "preset",
];

const SOURCE_FIELDS: &[&str] = &["concentration", "rate", "policy", "entry"];

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: cannot parse `{value}`")]
    BadValue { key: String, value: String },
    #[error("config key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    fn invalid(key: impl Into<String>, reason: impl ToString) -> Self {
        ConfigError::Invalid {
            key: key.into(),
            reason: reason.to_string(),
        }
    }
}

/// Unvalidated key/value pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: line.to_string(),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: line.to_string(),
                });
            }
            check_key(key)?;
            if raw.entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate {
                    line: i + 1,
                    key: key.to_string(),
                });
            }
        }
        Ok(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Sets or replaces a key, as a command-line override does.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        check_key(key)?;
        self.entries.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|_| ConfigError::BadValue {
                    key: key.to_string(),
                    value: v.to_string(),
                })
            })
            .transpose()
    }

    fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }
}

fn check_key(key: &str) -> Result<(), ConfigError> {
    let known = match key.split_once('.') {
        Some(("source_lo" | "source_hi", field)) => SOURCE_FIELDS.contains(&field),
        Some(_) => false,
        None => SCALAR_KEYS.contains(&key),
    };
    if known {
        Ok(())
    } else {
        Err(ConfigError::UnknownKey(key.to_string()))
    }
}

fn parse_mode(key: &str, v: &str) -> Result<DynamicsKind, ConfigError> {
    match v {
        "brownian" | "bd" => Ok(DynamicsKind::Brownian),
        "langevin" | "ld" => Ok(DynamicsKind::Langevin),
        _ => Err(ConfigError::BadValue {
            key: key.into(),
            value: v.into(),
        }),
    }
}

fn parse_policy(key: &str, v: &str) -> Result<InjectionPolicy, ConfigError> {
    match v {
        "poisson" => Ok(InjectionPolicy::Poisson),
        "fixed" | "fixed_interval" => Ok(InjectionPolicy::FixedInterval),
        "bernoulli" | "bernoulli_per_step" => Ok(InjectionPolicy::BernoulliPerStep),
        _ => Err(ConfigError::BadValue {
            key: key.into(),
            value: v.into(),
        }),
    }
}

fn parse_entry(key: &str, v: &str) -> Result<EntryKind, ConfigError> {
    match v {
        "residual" | "residual_normal" => Ok(EntryKind::ResidualNormal),
        "point" | "point_at_boundary" => Ok(EntryKind::PointAtBoundary),
        _ => Err(ConfigError::BadValue {
            key: key.into(),
            value: v.into(),
        }),
    }
}

/// What bounds a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Workload {
    /// This many injected trajectories, each followed until absorption.
    Trajectories(u64),
    /// Stationary measurement over this much simulated time, after a burn-in.
    Duration(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub params: SimParams,
    pub mode: DynamicsKind,
    pub force: ForceField,
    pub sources: Vec<SourceSpec>,
    pub workload: Workload,
    pub n_bins: usize,
    pub probes: Vec<f64>,
    pub seed: u64,
    pub preset: Option<String>,
    pub output_path: PathBuf,
}

impl ExperimentConfig {
    /// Brownian run on `params` with no sources yet, 50 bins, seed 1.
    pub fn new(params: SimParams, workload: Workload) -> Self {
        Self {
            params,
            mode: DynamicsKind::Brownian,
            force: ForceField::Zero,
            sources: Vec::new(),
            workload,
            n_bins: 50,
            probes: Vec::new(),
            seed: DEFAULT_SEED,
            preset: None,
            output_path: PathBuf::from("."),
        }
    }

    pub fn with_source(mut self, source: SourceSpec) -> Self {
        self.sources.push(source);
        self
    }

    pub fn source(&self, side: Side) -> Option<&SourceSpec> {
        self.sources.iter().find(|s| s.side == side)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let params = SimParams::new(
            raw.parsed_or("epsilon", 1.0)?,
            raw.parsed_or("gamma", 1000.0)?,
            raw.parsed_or("dt", 1.0)?,
            raw.parsed_or("domain_lo", 0.0)?,
            raw.parsed_or("domain_hi", 1.0)?,
        );
        let params = params.validate().map_err(param_error)?;
        let mode = raw
            .get("mode")
            .map(|v| parse_mode("mode", v))
            .transpose()?
            .unwrap_or(DynamicsKind::Brownian);
        let workload = match (raw.parsed::<u64>("n_trajectories")?, raw.parsed::<f64>("duration")?) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::invalid(
                    "duration",
                    "n_trajectories and duration are mutually exclusive",
                ))
            }
            (None, Some(d)) => Workload::Duration(d),
            (Some(n), None) => Workload::Trajectories(n),
            (None, None) => Workload::Trajectories(10_000),
        };
        let probes = match raw.get("probes") {
            None | Some("") => Vec::new(),
            Some(list) => list
                .split(',')
                .map(|p| {
                    p.trim().parse::<f64>().map_err(|_| ConfigError::BadValue {
                        key: "probes".into(),
                        value: p.trim().into(),
                    })
                })
                .collect::<Result<_, _>>()?,
        };
        let mut sources = Vec::new();
        for side in [Side::Lo, Side::Hi] {
            if let Some(spec) = source_from_raw(raw, side, &params)? {
                sources.push(spec);
            }
        }
        let config = Self {
            params,
            mode,
            force: ForceField::Zero,
            sources,
            workload,
            n_bins: raw.parsed_or("n_bins", 50)?,
            probes,
            seed: raw.parsed_or("seed", DEFAULT_SEED)?,
            preset: raw.get("preset").map(str::to_string),
            output_path: PathBuf::from("."),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        Self::from_raw(&RawConfig::from_file(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate().map_err(param_error)?;
        if self.n_bins == 0 {
            return Err(ConfigError::invalid("n_bins", "must be at least 1"));
        }
        match self.workload {
            Workload::Trajectories(_) => {}
            Workload::Duration(d) if d.is_finite() && d > 0.0 => {}
            Workload::Duration(d) => {
                return Err(ConfigError::invalid("duration", format!("must be positive, got {d}")))
            }
        }
        if let Some(x) = self.probes.iter().find(|x| !self.params.contains(**x)) {
            return Err(ConfigError::invalid("probes", format!("probe {x} lies outside the domain")));
        }
        if self.sources.is_empty() && self.preset.is_none() {
            return Err(ConfigError::invalid(
                "source_lo",
                "at least one source is required",
            ));
        }
        for side in [Side::Lo, Side::Hi] {
            if self.sources.iter().filter(|s| s.side == side).count() > 1 {
                return Err(ConfigError::invalid(source_prefix(side), "declared twice"));
            }
        }
        for s in &self.sources {
            s.validate(&self.params).map_err(|e| source_error(s.side, e))?;
        }
        Ok(())
    }
}

fn source_prefix(side: Side) -> &'static str {
    match side {
        Side::Lo => "source_lo",
        Side::Hi => "source_hi",
    }
}

fn source_from_raw(raw: &RawConfig, side: Side, params: &SimParams) -> Result<Option<SourceSpec>, ConfigError> {
    let prefix = source_prefix(side);
    let key = |field: &str| format!("{prefix}.{field}");
    if SOURCE_FIELDS.iter().all(|f| raw.get(&key(f)).is_none()) {
        return Ok(None);
    }
    let concentration: Option<f64> = raw.parsed(&key("concentration"))?;
    let rate: Option<f64> = raw.parsed(&key("rate"))?;
    let (concentration, rate) = match (concentration, rate) {
        (None, None) => {
            return Err(ConfigError::invalid(
                key("concentration"),
                "a source needs a concentration or a rate",
            ))
        }
        (Some(c), None) => (c, source_strength(c, params, 0.0, side)),
        (c, Some(r)) => (c.unwrap_or(0.0), r),
    };
    let policy = raw
        .get(&key("policy"))
        .map(|v| parse_policy(&key("policy"), v))
        .transpose()?
        .unwrap_or_default();
    let entry = raw
        .get(&key("entry"))
        .map(|v| parse_entry(&key("entry"), v))
        .transpose()?
        .unwrap_or(EntryKind::ResidualNormal);
    Ok(Some(SourceSpec {
        side,
        concentration,
        rate,
        policy,
        entry: EntryDistribution::for_params(entry, params),
    }))
}

fn param_error(e: ParamError) -> ConfigError {
    let key = match e {
        ParamError::NonPositiveEpsilon => "epsilon",
        ParamError::NonPositiveGamma => "gamma",
        ParamError::NonPositiveDt => "dt",
        ParamError::EmptyDomain => "domain_hi",
        ParamError::NonFinite(name) => name,
        ParamError::BadForceTable => "force",
    };
    ConfigError::invalid(key, e)
}

fn source_error(side: Side, e: SourceError) -> ConfigError {
    let field = match e {
        SourceError::BadRate(_) | SourceError::BernoulliOverflow(_) => "rate",
        SourceError::BadConcentration(_) => "concentration",
        SourceError::EntryMismatch { .. } => "entry",
        SourceError::EmptyWindow(..) => "rate",
    };
    ConfigError::invalid(format!("{}.{field}", source_prefix(side)), e)
}
