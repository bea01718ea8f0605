//! Run configuration: a versioned TOML document.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ds2aw_core::field::Harmonic;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TAIL_TOL: f64 = 1e-14;
/// Smallest grid side accepted by the reference solver.
pub const MIN_GRID: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(rename = "L_x")]
    pub lx: f64,
    #[serde(rename = "L_y")]
    pub ly: f64,
    #[serde(default = "unit_amplitude")]
    pub a: f64,
    pub eps: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub perturbation: Perturbation,
    pub grid: Grid,
    #[serde(default)]
    pub theta: ThetaConfig,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn unit_amplitude() -> f64 {
    1.0
}

/// Exactly one of the two sources must be present.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmonics: Option<Vec<Harmonic>>,
    /// CSV (`.csv`) or DS2F binary field, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Radius {
    Fixed(usize),
    Adaptive(AdaptiveTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdaptiveTag {
    Adaptive,
}

impl Radius {
    pub const ADAPTIVE: Radius = Radius::Adaptive(AdaptiveTag::Adaptive);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaConfig {
    #[serde(rename = "M")]
    pub m: Radius,
    pub tail_tol: f64,
}

impl Default for ThetaConfig {
    fn default() -> Self {
        ThetaConfig { m: Radius::ADAPTIVE, tail_tol: DEFAULT_TAIL_TOL }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    #[default]
    Bin,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn bin(self) -> bool {
        matches!(self, Format::Bin | Format::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    /// Relative to the config file.
    pub dir: PathBuf,
    #[serde(default)]
    pub format: Format,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs { dir: PathBuf::from("out"), format: Format::Bin }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Reject time steps above the splitting accuracy bound.
    #[serde(default)]
    pub strict_dt: bool,
    #[serde(default)]
    pub dealias: bool,
}

fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version)));
        }
        positive("L_x", self.lx)?;
        positive("L_y", self.ly)?;
        positive("a", self.a)?;
        positive("eps", self.eps)?;
        positive("dt", self.dt)?;
        if self.times.is_empty() {
            return Err(invalid("times", "at least one time is required"));
        }
        if let Some(t) = self.times.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(invalid("times", format!("times must be finite and non-negative, got {t}")));
        }
        if let Some(w) = self.times.windows(2).find(|w| w[1] < w[0]) {
            return Err(invalid("times", format!("times must be sorted, {} follows {}", w[1], w[0])));
        }
        let Grid { nx, ny } = self.grid;
        for (field, n) in [("grid.nx", nx), ("grid.ny", ny)] {
            if n < MIN_GRID || !n.is_power_of_two() {
                return Err(invalid(field, format!("must be a power of two >= {MIN_GRID}, got {n}")));
            }
        }
        match (&self.perturbation.harmonics, &self.perturbation.grid_file) {
            (Some(_), Some(_)) => return Err(invalid("perturbation", "give either `harmonics` or `grid_file`, not both")),
            (None, None) => return Err(invalid("perturbation", "one of `harmonics` or `grid_file` is required")),
            (Some(h), None) => self.validate_harmonics(h)?,
            (None, Some(_)) => {}
        }
        if let Radius::Fixed(m) = self.theta.m {
            if m == 0 || m > ds2aw_core::theta::MAX_RADIUS {
                return Err(invalid("theta.M", format!("must be in 1..={} or \"adaptive\", got {m}", ds2aw_core::theta::MAX_RADIUS)));
            }
        }
        positive("theta.tail_tol", self.theta.tail_tol)?;
        Ok(())
    }

    fn validate_harmonics(&self, h: &[Harmonic]) -> Result<(), ConfigError> {
        if h.is_empty() {
            return Err(invalid("perturbation.harmonics", "must not be empty"));
        }
        for (i, hm) in h.iter().enumerate() {
            if (hm.n_x, hm.n_y) == (0, 0) {
                return Err(invalid("perturbation.harmonics", format!("entry {i} is (0, 0); the perturbation must have zero mean")));
            }
            if !(hm.c.re.is_finite() && hm.c.im.is_finite()) {
                return Err(invalid("perturbation.harmonics", format!("entry {i} has a non-finite coefficient")));
            }
            let (nx, ny) = (self.grid.nx as i64, self.grid.ny as i64);
            if 2 * hm.n_x.abs() >= nx || 2 * hm.n_y.abs() >= ny {
                return Err(invalid(
                    "perturbation.harmonics",
                    format!("entry {i} ({}, {}) is not resolved by the {nx}x{ny} grid", hm.n_x, hm.n_y),
                ));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form; changes with any field.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes to JSON");
        Sha256::digest(&bytes).iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}
