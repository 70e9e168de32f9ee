//! Experiment configuration: UTF-8 JSON with a closed schema (unknown keys
//! are rejected). Rational parameters are strings like `"1/2"` or `"0.25"`
//! so configs stay exact.

use num_rational::BigRational;
use serde::Deserialize;
use thiserror::Error;

use fejermon::parse_rational;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("io error reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum AppKind {
    Hilbert,
    Banach,
    Synthetic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub app: AppKind,
    #[serde(default)]
    pub map: Option<MapConfig>,
    #[serde(default)]
    pub operator: Option<OperatorConfig>,
    #[serde(default)]
    pub space: Option<SpaceConfig>,
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
    pub x0: Vec<f64>,
    pub n_max: u64,
    pub checks: Vec<String>,
    #[serde(default)]
    pub k_list: Vec<u64>,
    #[serde(default)]
    pub g: Option<GConfig>,
    #[serde(default)]
    pub delta_list: Vec<String>,
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapConfig {
    RotationAverage { alpha: String, angle_deg: f64 },
    ProjectionAverage { alpha: String, radius: f64, dim: usize },
    ResolventIdentity { lambda: f64, dim: usize },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    ScaledDuality { c: String },
    CoordinatewiseCubic,
    CoordinatewiseLinear { slope: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub dim: usize,
    pub p: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticConfig {
    /// Constant at `x0`.
    Constant,
    /// `x_n = ((-1)^n * amplitude, 0, ...)`.
    Oscillate { amplitude: f64 },
    /// Halving distances to the origin with one jump injected at the given
    /// even-subsequence index.
    Jump { at: u64, size: f64 },
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default)]
    pub inertia: Option<InertiaConfig>,
    #[serde(default)]
    pub alpha: Option<String>,
    #[serde(default)]
    pub r: Option<String>,
    #[serde(default)]
    pub alpha_bar: Option<String>,
    #[serde(default)]
    pub r_bar: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InertiaConfig {
    Const { value: String },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GConfig {
    Const { c: u64 },
    Linear { a: u64, b: u64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "tol_default")]
    pub fejer: f64,
    #[serde(default = "tol_default")]
    pub uniform: f64,
    #[serde(default = "tol_default")]
    pub kt: f64,
    #[serde(default = "tol_tight")]
    pub brute_force: f64,
    #[serde(default = "window_default")]
    pub rate_window: u64,
}

fn tol_default() -> f64 {
    1e-10
}

fn tol_tight() -> f64 {
    1e-12
}

fn window_default() -> u64 {
    1000
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            fejer: tol_default(),
            uniform: tol_default(),
            kt: tol_default(),
            brute_force: tol_tight(),
            rate_window: window_default(),
        }
    }
}

pub const HILBERT_CHECKS: &[&str] = &[
    "averagedness",
    "fejer",
    "f_monotone",
    "lemma_suite",
    "phi_bound",
    "uniform_moduli",
    "closedness",
    "metastability",
    "rate",
];

pub const BANACH_CHECKS: &[&str] = &[
    "resolvent_residual",
    "mu_bound",
    "fejer",
    "phi_monotone",
    "kt",
    "quant_kt",
    "liminf",
    "p2_crossval",
    "metastability",
    "rate",
];

pub const SYNTHETIC_CHECKS: &[&str] = &["fejer", "metastability"];

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        if cfg.name.is_none() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_str_named(text: &str, name: &str) -> Result<Self, ConfigError> {
        let mut cfg: ExperimentConfig = serde_json::from_str(text)?;
        if cfg.name.is_none() {
            cfg.name = Some(name.to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn display_name(&self) -> &str {
        self.name.as_deref().unwrap_or("experiment")
    }

    pub fn rational(text: &str, field: &str) -> Result<BigRational, ConfigError> {
        parse_rational(text)
            .ok_or_else(|| ConfigError::Invalid(format!("{field}: not a rational: {text:?}")))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let allowed: &[&str] = match self.app {
            AppKind::Hilbert => HILBERT_CHECKS,
            AppKind::Banach => BANACH_CHECKS,
            AppKind::Synthetic => SYNTHETIC_CHECKS,
        };
        for c in &self.checks {
            if !allowed.contains(&c.as_str()) {
                return Err(ConfigError::Invalid(format!(
                    "unknown check {c:?} for this app; allowed: {allowed:?}"
                )));
            }
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::Invalid("x0 must be finite".into()));
        }
        match self.app {
            AppKind::Hilbert => {
                if self.map.is_none() {
                    return Err(ConfigError::Invalid("hilbert app requires \"map\"".into()));
                }
            }
            AppKind::Banach => {
                if self.operator.is_none() || self.space.is_none() || self.schedule.is_none() {
                    return Err(ConfigError::Invalid(
                        "banach app requires \"operator\", \"space\" and \"schedule\"".into(),
                    ));
                }
                let space = self.space.as_ref().unwrap();
                if space.p < 2 {
                    return Err(ConfigError::Invalid("space.p must be >= 2".into()));
                }
                if space.dim != self.x0.len() {
                    return Err(ConfigError::Invalid(format!(
                        "x0 has dimension {}, space.dim is {}",
                        self.x0.len(),
                        space.dim
                    )));
                }
            }
            AppKind::Synthetic => {
                if self.synthetic.is_none() {
                    return Err(ConfigError::Invalid(
                        "synthetic app requires \"synthetic\"".into(),
                    ));
                }
            }
        }
        if self.checks.iter().any(|c| c == "metastability") && self.g.is_none() {
            return Err(ConfigError::Invalid(
                "metastability check requires a counter function \"g\"".into(),
            ));
        }
        if self.checks.iter().any(|c| c == "rate") && self.delta_list.is_empty() {
            return Err(ConfigError::Invalid("rate check requires \"delta_list\"".into()));
        }
        Ok(())
    }
}
