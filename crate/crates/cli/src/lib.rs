//! Library half of the `mmse-poincare` command: configuration, sweeps and
//! the CSV / SVG artifacts.

pub mod check;
pub mod config;
pub mod csv;
pub mod svg;

use std::path::Path;

use anyhow::{Context, Result};
use mmse_poincare_core::mc::{self, SweepRow};

pub use config::{parse_config, preset, ExperimentConfig, Model};

/// Environment variable overriding the worker-thread count.
pub const THREADS_ENV: &str = "MMSE_POINCARE_THREADS";

/// Evaluates every grid point of `cfg`.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let rows = match &cfg.model {
        Model::Scalar(spec) => mc::run_sweep(spec, &cfg.grid, &cfg.settings, cfg.seed),
        Model::Vector(spec) => mc::run_sweep(spec, &cfg.grid, &cfg.settings, cfg.seed),
    };
    Ok(rows?)
}

/// Loads a config file, or a preset when `source` names one and is not an
/// existing path.
pub fn load(source: &str) -> Result<ExperimentConfig> {
    let path = Path::new(source);
    if !path.exists() && config::preset_text(source).is_some() {
        return Ok(preset(source)?);
    }
    let text = std::fs::read_to_string(path).with_context(|| {
        format!(
            "reading config `{source}` (built-in presets: {})",
            config::PRESETS.join(", ")
        )
    })?;
    parse_config(&text).with_context(|| format!("invalid config `{source}`"))
}

/// What a run produced.
pub struct RunOutput {
    pub rows: Vec<SweepRow>,
    pub csv: String,
}

/// Runs the sweep and writes the configured artifacts. Nothing is written
/// if any grid point fails.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let rows = sweep(cfg)?;
    let text = csv::render(cfg, &rows);
    if let Some(path) = &cfg.output.csv {
        csv::write_atomic(path, text.as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &cfg.output.svg {
        let title = match (&cfg.preset, &cfg.model) {
            (Some(name), _) => format!("{name}: bound, MMSE and LMMSE"),
            (None, Model::Scalar(_)) => "scalar channel".to_string(),
            (None, Model::Vector(_)) => "vector channel".to_string(),
        };
        svg::emit_svg(&rows, &title, path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(RunOutput { rows, csv: text })
}

/// Worker count from [`THREADS_ENV`], if set.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("{THREADS_ENV}={v} is not a thread count"))?;
            anyhow::ensure!(n > 0, "{THREADS_ENV} must be at least 1");
            Ok(Some(n))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(e.into()),
    }
}
