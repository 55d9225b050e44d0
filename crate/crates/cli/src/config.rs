//! Experiment configuration: TOML schema, presets and validation.
//!
//! See `docs/config.md` for the file format.

use std::fmt;
use std::path::PathBuf;

use mmse_poincare_core::linalg::ComplexMatrix;
use mmse_poincare_core::mc::{self, QuantitySet, ScalarInner, SweepSettings};
use mmse_poincare_core::scalar::{ScalarChannelSpec, ScalarPilot};
use mmse_poincare_core::vector::{PilotAtom, RhoRule, VectorChannelSpec};
use num_complex::Complex64;
use serde::Deserialize;

pub const DEFAULT_TRIALS: u64 = 1_000_000;
pub const DEFAULT_INNER_TRIALS: u64 = 2_000;
pub const DEFAULT_QUADRATURE_ORDER: usize = 200;
pub const PRESETS: [&str; 2] = ["fig1", "fig2"];

/// A configuration problem, always naming the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}`: {}", self.key, self.reason)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Scalar,
    Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Quantity {
    Lb,
    MmseT1,
    MmseOracle,
    Lmmse,
    Asymptote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum InnerName {
    Quadrature,
    NestedMc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RhoName {
    Spectral,
    Frobenius,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: ModelKind,
    alpha: f64,
    sigma_h2: f64,
    grid: RawGrid,
    pilot: RawPilot,
    trials: Option<u64>,
    inner_trials: Option<u64>,
    lb_trials: Option<u64>,
    seed: Option<u64>,
    chunks: Option<usize>,
    quantities: Option<Vec<Quantity>>,
    scalar_inner: Option<InnerName>,
    quadrature_order: Option<usize>,
    rho_rule: Option<RhoName>,
    power_budget: Option<f64>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    values: Option<Vec<f64>>,
    start: Option<f64>,
    stop: Option<f64>,
    per_decade: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPilot {
    values: Option<Vec<f64>>,
    probs: Option<Vec<f64>>,
    m: Option<usize>,
    n: Option<usize>,
    t: Option<usize>,
    atoms: Option<Vec<RawAtom>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAtom {
    matrix: Option<String>,
    re: Option<Vec<Vec<f64>>>,
    im: Option<Vec<Vec<f64>>>,
    scale: Option<f64>,
    prob: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    csv: Option<PathBuf>,
    svg: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub enum Model {
    Scalar(ScalarChannelSpec),
    Vector(VectorChannelSpec),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Scalar(_) => ModelKind::Scalar,
            Model::Vector(_) => ModelKind::Vector,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Preset name, when built from one.
    pub preset: Option<String>,
    pub model: Model,
    pub grid: Vec<f64>,
    pub settings: SweepSettings,
    pub seed: u64,
    pub output: OutputPaths,
}

impl ExperimentConfig {
    /// Replaces the trial count. An explicit bound trial count larger than
    /// the new total is clamped to it.
    pub fn set_trials(&mut self, trials: u64) -> Result<(), ConfigError> {
        if trials == 0 {
            return Err(ConfigError::new("trials", "must be at least 1"));
        }
        self.settings.trials = trials;
        if let Some(lb) = self.settings.lb_trials.as_mut() {
            *lb = (*lb).min(trials);
        }
        Ok(())
    }

    /// Bound trials actually used.
    pub fn lb_trials(&self) -> u64 {
        match self.model {
            Model::Scalar(_) => self.settings.scalar_lb_outer(),
            Model::Vector(_) => self.settings.vector_lb_outer(),
        }
    }
}

/// Parses and validates a TOML configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| toml_error(e, text))?;
    build(raw, None)
}

/// The built-in configuration called `name`.
pub fn preset(name: &str) -> Result<ExperimentConfig, ConfigError> {
    let text = preset_text(name).ok_or_else(|| {
        ConfigError::new(
            "preset",
            format!("unknown preset `{name}` (known: {})", PRESETS.join(", ")),
        )
    })?;
    let raw: RawConfig = toml::from_str(text).map_err(|e| toml_error(e, text))?;
    build(raw, Some(name.to_string()))
}

/// TOML source of a preset.
pub fn preset_text(name: &str) -> Option<&'static str> {
    match name {
        "fig1" => Some(FIG1),
        "fig2" => Some(FIG2),
        _ => None,
    }
}

// Scalar pilot x = 1, alpha = 0.4, unit channel variance.
const FIG1: &str = r#"
model = "scalar"
alpha = 0.4
sigma_h2 = 1.0
trials = 1000000
lb_trials = 100000
seed = 1

[grid]
start = 1e-4
stop = 10.0
per_decade = 20

[pilot]
values = [1.0]
"#;

// M = N = T = 4, alpha = 0.4, X = I (so C_X = I).
const FIG2: &str = r#"
model = "vector"
alpha = 0.4
sigma_h2 = 1.0
trials = 1000000
inner_trials = 2000
seed = 2

[grid]
start = 1e-4
stop = 10.0
per_decade = 20

[pilot]
m = 4
n = 4
t = 4

[[pilot.atoms]]
matrix = "identity"
"#;

fn toml_error(e: toml::de::Error, text: &str) -> ConfigError {
    let msg = e.message().trim_end().to_string();
    let line = e.span().map(|s| {
        let start = s.start.min(text.len());
        let number = text[..start].matches('\n').count() + 1;
        let content = text[..start].rsplit('\n').next().unwrap_or("").to_string()
            + text[start..].split('\n').next().unwrap_or("");
        (number, content)
    });
    // serde names missing and unknown fields; otherwise use the key on the
    // offending line.
    let key = if msg.contains("field `") {
        msg.split('`').nth(1).map(str::to_string)
    } else {
        line.as_ref()
            .and_then(|(_, content)| content.split_once('='))
            .map(|(k, _)| k.trim().to_string())
    };
    let location = line
        .map(|(n, _)| format!(" (line {n})"))
        .unwrap_or_default();
    ConfigError::new(
        key.unwrap_or_else(|| "config".into()),
        format!("{msg}{location}"),
    )
}

fn core_error(e: mmse_poincare_core::Error) -> ConfigError {
    match e {
        mmse_poincare_core::Error::InvalidConfig { field, reason } => {
            ConfigError::new(field, reason)
        }
        other => ConfigError::new("pilot", other.to_string()),
    }
}

fn positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::new(
            key,
            format!("{v} is not a positive number"),
        ))
    }
}

fn nonzero(key: &str, v: u64) -> Result<u64, ConfigError> {
    if v == 0 {
        Err(ConfigError::new(key, "must be at least 1"))
    } else {
        Ok(v)
    }
}

fn build(raw: RawConfig, preset: Option<String>) -> Result<ExperimentConfig, ConfigError> {
    let grid = build_grid(&raw.grid)?;
    let first = grid[0];

    let mut settings = SweepSettings::new(nonzero("trials", raw.trials.unwrap_or(DEFAULT_TRIALS))?);
    settings.inner_trials = nonzero(
        "inner_trials",
        raw.inner_trials.unwrap_or(DEFAULT_INNER_TRIALS),
    )?;
    settings.lb_trials = raw.lb_trials.map(|v| nonzero("lb_trials", v)).transpose()?;
    if let Some(chunks) = raw.chunks {
        if chunks == 0 {
            return Err(ConfigError::new("chunks", "must be at least 1"));
        }
        settings.chunks = chunks;
    }
    if let Some(list) = &raw.quantities {
        if list.is_empty() {
            return Err(ConfigError::new(
                "quantities",
                "must name at least one quantity",
            ));
        }
        settings.quantities = QuantitySet {
            lb: list.contains(&Quantity::Lb),
            mmse_t1: list.contains(&Quantity::MmseT1),
            mmse_oracle: list.contains(&Quantity::MmseOracle),
            lmmse: list.contains(&Quantity::Lmmse),
            asymptote: list.contains(&Quantity::Asymptote),
        };
    }
    let order = raw.quadrature_order.unwrap_or(DEFAULT_QUADRATURE_ORDER);
    if !(2..=mmse_poincare_core::oracle::MAX_HERMITE_ORDER).contains(&order) {
        return Err(ConfigError::new(
            "quadrature_order",
            format!(
                "{order} is outside 2..={}",
                mmse_poincare_core::oracle::MAX_HERMITE_ORDER
            ),
        ));
    }
    settings.scalar_inner = match raw.scalar_inner.unwrap_or(InnerName::Quadrature) {
        InnerName::Quadrature => ScalarInner::Quadrature(order),
        InnerName::NestedMc => ScalarInner::NestedMc,
    };

    let model = match raw.model {
        ModelKind::Scalar => {
            for (key, present) in [
                ("rho_rule", raw.rho_rule.is_some()),
                ("power_budget", raw.power_budget.is_some()),
            ] {
                if present {
                    return Err(ConfigError::new(key, "only applies to the vector model"));
                }
            }
            Model::Scalar(scalar_spec(raw.alpha, raw.sigma_h2, first, &raw.pilot)?)
        }
        ModelKind::Vector => {
            if raw.scalar_inner.is_some() || raw.quadrature_order.is_some() {
                let key = if raw.scalar_inner.is_some() {
                    "scalar_inner"
                } else {
                    "quadrature_order"
                };
                return Err(ConfigError::new(key, "only applies to the scalar model"));
            }
            let mut spec = vector_spec(raw.alpha, raw.sigma_h2, first, &raw.pilot)?;
            if let Some(rule) = raw.rho_rule {
                spec = spec.with_rho_rule(match rule {
                    RhoName::Spectral => RhoRule::Spectral,
                    RhoName::Frobenius => RhoRule::Frobenius,
                });
            }
            if let Some(p) = raw.power_budget {
                spec = spec
                    .with_power_budget(positive("power_budget", p)?)
                    .map_err(core_error)?;
            }
            Model::Vector(spec)
        }
    };

    let output = raw.output.unwrap_or_default();
    Ok(ExperimentConfig {
        preset,
        model,
        grid,
        settings,
        seed: raw.seed.unwrap_or(0),
        output: OutputPaths {
            csv: output.csv,
            svg: output.svg,
        },
    })
}

fn build_grid(raw: &RawGrid) -> Result<Vec<f64>, ConfigError> {
    let grid = match (&raw.values, raw.start, raw.stop, raw.per_decade) {
        (Some(values), None, None, None) => {
            if values.is_empty() {
                return Err(ConfigError::new("grid.values", "must not be empty"));
            }
            for v in values {
                positive("grid.values", *v)?;
            }
            values.clone()
        }
        (None, Some(start), Some(stop), per_decade) => {
            let start = positive("grid.start", start)?;
            let stop = positive("grid.stop", stop)?;
            if stop < start {
                return Err(ConfigError::new(
                    "grid.stop",
                    format!("{stop} is below grid.start = {start}"),
                ));
            }
            let per_decade = per_decade.unwrap_or(20);
            if per_decade == 0 {
                return Err(ConfigError::new("grid.per_decade", "must be at least 1"));
            }
            mc::log_grid(start, stop, per_decade)
        }
        (Some(_), ..) => {
            return Err(ConfigError::new(
                "grid",
                "give either `values` or `start`/`stop`/`per_decade`, not both",
            ))
        }
        (None, None, _, _) => {
            return Err(ConfigError::new(
                "grid.start",
                "missing (or give grid.values)",
            ))
        }
        (None, Some(_), None, _) => return Err(ConfigError::new("grid.stop", "missing")),
    };
    Ok(grid)
}

fn scalar_spec(
    alpha: f64,
    sigma_h2: f64,
    sigma_s2: f64,
    raw: &RawPilot,
) -> Result<ScalarChannelSpec, ConfigError> {
    for (key, present) in [
        ("pilot.m", raw.m.is_some()),
        ("pilot.n", raw.n.is_some()),
        ("pilot.t", raw.t.is_some()),
        ("pilot.atoms", raw.atoms.is_some()),
    ] {
        if present {
            return Err(ConfigError::new(key, "only applies to the vector model"));
        }
    }
    let values = raw
        .values
        .clone()
        .ok_or_else(|| ConfigError::new("pilot.values", "missing"))?;
    let pilot = match &raw.probs {
        Some(p) => ScalarPilot::new(values, p.clone()),
        None => ScalarPilot::uniform(values),
    }
    .map_err(|e| match core_error(e) {
        ConfigError { key, reason } if key == "pilot" => ConfigError::new("pilot.values", reason),
        other => other,
    })?;
    let spec = ScalarChannelSpec::new(alpha, sigma_h2, sigma_s2, pilot).map_err(core_error)?;
    spec.require_nonzero_pilot()
        .map_err(|e| ConfigError::new("pilot.values", core_error(e).reason))?;
    Ok(spec)
}

fn vector_spec(
    alpha: f64,
    sigma_h2: f64,
    sigma_s2: f64,
    raw: &RawPilot,
) -> Result<VectorChannelSpec, ConfigError> {
    for (key, present) in [
        ("pilot.values", raw.values.is_some()),
        ("pilot.probs", raw.probs.is_some()),
    ] {
        if present {
            return Err(ConfigError::new(key, "only applies to the scalar model"));
        }
    }
    let dim = |key: &str, v: Option<usize>| -> Result<usize, ConfigError> {
        match v {
            Some(0) => Err(ConfigError::new(key, "must be at least 1")),
            Some(v) => Ok(v),
            None => Err(ConfigError::new(key, "missing")),
        }
    };
    let (m, n, t) = (
        dim("pilot.m", raw.m)?,
        dim("pilot.n", raw.n)?,
        dim("pilot.t", raw.t)?,
    );
    let raw_atoms = raw
        .atoms
        .as_ref()
        .filter(|a| !a.is_empty())
        .ok_or_else(|| ConfigError::new("pilot.atoms", "at least one pilot matrix is required"))?;
    let default_prob = 1.0 / raw_atoms.len() as f64;
    let atoms = raw_atoms
        .iter()
        .enumerate()
        .map(|(i, a)| pilot_atom(i, a, m, t, default_prob))
        .collect::<Result<Vec<_>, _>>()?;
    VectorChannelSpec::new(alpha, sigma_h2, sigma_s2, (m, n, t), atoms).map_err(
        |e| match core_error(e) {
            ConfigError { key, reason } if key == "pilot" || key == "dimensions" => {
                ConfigError::new("pilot.atoms", reason)
            }
            other => other,
        },
    )
}

fn pilot_atom(
    i: usize,
    raw: &RawAtom,
    m: usize,
    t: usize,
    default_prob: f64,
) -> Result<PilotAtom, ConfigError> {
    let key = |field: &str| format!("pilot.atoms[{i}].{field}");
    let scale = raw.scale.unwrap_or(1.0);
    if !scale.is_finite() {
        return Err(ConfigError::new(
            key("scale"),
            format!("{scale} is not finite"),
        ));
    }
    let matrix = match (&raw.matrix, &raw.re) {
        (Some(name), None) => {
            if raw.im.is_some() {
                return Err(ConfigError::new(
                    key("im"),
                    "cannot be combined with `matrix`",
                ));
            }
            if name != "identity" {
                return Err(ConfigError::new(
                    key("matrix"),
                    format!("unknown matrix `{name}` (only \"identity\")"),
                ));
            }
            ComplexMatrix::identity_rect(m, t)
        }
        (None, Some(re)) => {
            check_shape(&key("re"), re, m, t)?;
            let im = match &raw.im {
                Some(im) => {
                    check_shape(&key("im"), im, m, t)?;
                    im.clone()
                }
                None => vec![vec![0.0; t]; m],
            };
            let data = re
                .iter()
                .flatten()
                .zip(im.iter().flatten())
                .map(|(&a, &b)| Complex64::new(a, b))
                .collect();
            ComplexMatrix::new(m, t, data)
                .map_err(|e| ConfigError::new(key("re"), e.to_string()))?
        }
        (Some(_), Some(_)) => {
            return Err(ConfigError::new(
                key("matrix"),
                "give either `matrix` or `re`/`im`",
            ))
        }
        (None, None) => {
            return Err(ConfigError::new(
                key("matrix"),
                "missing (or give `re`/`im`)",
            ))
        }
    };
    Ok(PilotAtom {
        matrix: matrix.scaled(Complex64::new(scale, 0.0)),
        prob: raw.prob.unwrap_or(default_prob),
    })
}

fn check_shape(key: &str, rows: &[Vec<f64>], m: usize, t: usize) -> Result<(), ConfigError> {
    if rows.len() != m || rows.iter().any(|r| r.len() != t) {
        return Err(ConfigError::new(
            key,
            format!("must be an M x T = {m} x {t} array of rows"),
        ));
    }
    Ok(())
}
