//! Error classes and their process exit codes.

use std::path::PathBuf;

use ds2aw_core::curve::CurveError;
use ds2aw_core::field::FieldError;
use ds2aw_core::fieldgen::FieldgenError;
use ds2aw_core::modes::{GenericityReport, ModesError};
use ds2aw_core::refsolver::SolverError;
use ds2aw_core::theta::ThetaError;
use serde_json::json;

use crate::config::ConfigError;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_GENERICITY: u8 = 3;
pub const EXIT_DEGENERATE: u8 = 4;
pub const EXIT_NUMERIC: u8 = 5;
pub const EXIT_IO: u8 = 6;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error("periods are not generic: {} lattice vectors on the circle, {} marginal modes, {} shared spectral points",
        .0.on_circle_violations.len(), .0.marginal_modes.len(), .0.multiplicity_violations.len())]
    Genericity(Box<GenericityReport>),
    #[error("degenerate spectrum: {0}")]
    Degenerate(CurveError),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("time mismatch: {0}")]
    TimeMismatch(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    FieldFile { path: PathBuf, source: FieldError },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) | CliError::GridMismatch(_) | CliError::TimeMismatch(_) => EXIT_CONFIG,
            CliError::Genericity(_) => EXIT_GENERICITY,
            CliError::Degenerate(_) => EXIT_DEGENERATE,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Io { .. } | CliError::FieldFile { .. } => EXIT_IO,
        }
    }

    pub fn class(&self) -> &'static str {
        match self {
            CliError::Config(_) | CliError::Input(_) => "config",
            CliError::GridMismatch(_) => "grid-mismatch",
            CliError::TimeMismatch(_) => "time-mismatch",
            CliError::Genericity(_) => "genericity",
            CliError::Degenerate(_) => "degenerate",
            CliError::Numeric(_) => "numeric",
            CliError::Io { .. } | CliError::FieldFile { .. } => "io",
        }
    }

    /// One-line JSON record for stderr.
    pub fn to_json(&self) -> String {
        let mut v = json!({ "error": { "class": self.class(), "code": self.exit_code(), "message": self.to_string() } });
        if let CliError::Genericity(report) = self {
            v["error"]["report"] = serde_json::to_value(report).unwrap_or_default();
        }
        if let CliError::Degenerate(CurveError::DegenerateMode { pair, n_x, n_y, .. }) = self {
            v["error"]["pair"] = json!(pair);
            v["error"]["mode"] = json!([n_x, n_y]);
        }
        v.to_string()
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<CurveError> for CliError {
    fn from(e: CurveError) -> Self {
        match e {
            CurveError::NonGeneric(report) => CliError::Genericity(report),
            CurveError::Modes(ModesError::InvalidPeriod { .. } | ModesError::InvalidAmplitude(_))
            | CurveError::NonzeroMean { .. }
            | CurveError::Aliasing { .. }
            | CurveError::InvalidEpsilon(_) => CliError::Input(e.to_string()),
            CurveError::Modes(_) => CliError::Numeric(e.to_string()),
            CurveError::NoUnstableModes
            | CurveError::NotUnstable { .. }
            | CurveError::WrongClass { .. }
            | CurveError::DegeneratePair { .. }
            | CurveError::DuplicatePoint { .. }
            | CurveError::DegenerateMode { .. }
            | CurveError::CrossRatioDegenerate { .. } => CliError::Degenerate(e),
        }
    }
}

impl From<ModesError> for CliError {
    fn from(e: ModesError) -> Self {
        CurveError::Modes(e).into()
    }
}

impl From<ThetaError> for CliError {
    fn from(e: ThetaError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<FieldgenError> for CliError {
    fn from(e: FieldgenError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::NanDetected { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}
