//! CSV emission.
//!
//! Layout:
//!
//! ```text
//! # {"chunks":64,"grid":[...],"model":"scalar",...,"version":"0.1.0"}
//! sigma_s2,lb,lb_se,mmse_t1,mmse_t1_se,mmse_oracle,mmse_oracle_se,lmmse,asymptote
//! 0.0001,2.23e-5,...
//! ```
//!
//! Numbers use the shortest representation that parses back to the same
//! `f64`, in exponent form outside `[1e-3, 1e7)`. Quantities that were
//! not requested are left empty.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use mmse_poincare_core::mc::SweepRow;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Model};

pub const HEADER: &str =
    "sigma_s2,lb,lb_se,mmse_t1,mmse_t1_se,mmse_oracle,mmse_oracle_se,lmmse,asymptote";

/// Run metadata embedded in the first CSV line.
pub fn metadata(cfg: &ExperimentConfig) -> Value {
    let model = match &cfg.model {
        Model::Scalar(s) => json!({
            "kind": "scalar",
            "alpha": s.alpha,
            "sigma_h2": s.sigma_h2,
            "pilot_values": s.pilot.values(),
            "pilot_probs": s.pilot.probs(),
        }),
        Model::Vector(v) => json!({
            "kind": "vector",
            "alpha": v.alpha,
            "sigma_h2": v.sigma_h2,
            "m": v.m,
            "n": v.n,
            "t": v.t,
            "pilot_atoms": v.pilot_atoms().len(),
            "rho_rule": format!("{:?}", v.rho_rule).to_lowercase(),
        }),
    };
    json!({
        "software": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "preset": cfg.preset,
        "model": model,
        "seed": cfg.seed,
        "trials": cfg.settings.trials,
        "inner_trials": cfg.settings.inner_trials,
        "lb_trials": cfg.lb_trials(),
        "chunks": cfg.settings.chunks,
        "scalar_inner": format!("{:?}", cfg.settings.scalar_inner),
        "grid": cfg.grid,
    })
}

/// Shortest round-trip representation, in exponent form away from unit scale.
pub fn number(x: f64) -> String {
    if x == 0.0 || (1e-3..1e7).contains(&x.abs()) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(number).unwrap_or_default()
}

pub fn render(cfg: &ExperimentConfig, rows: &[SweepRow]) -> String {
    let mut out = String::new();
    writeln!(out, "# {}", metadata(cfg)).unwrap();
    writeln!(out, "{HEADER}").unwrap();
    for r in rows {
        let fields = [
            number(r.sigma_s2),
            opt(r.lb.map(|e| e.mean())),
            opt(r.lb.map(|e| e.std_error())),
            opt(r.mmse_t1.map(|e| e.mean())),
            opt(r.mmse_t1.map(|e| e.std_error())),
            opt(r.mmse_oracle.map(|e| e.mean())),
            opt(r.mmse_oracle.map(|e| e.std_error())),
            opt(r.lmmse),
            opt(r.asymptote_line),
        ];
        writeln!(out, "{}", fields.join(",")).unwrap();
    }
    out
}

/// Writes `contents` next to `path` and renames it into place, so a failed
/// write never leaves a partial file behind.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let tmp = temp_path(path);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// One parsed data row; empty fields become `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub sigma_s2: f64,
    pub values: [Option<f64>; 8],
}

/// Reads back a CSV produced by [`render`]: `(metadata, rows)`.
pub fn parse(text: &str) -> Result<(Value, Vec<CsvRow>), String> {
    let mut lines = text.lines();
    let meta = lines
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .ok_or("missing metadata line")?;
    let meta: Value = serde_json::from_str(meta).map_err(|e| e.to_string())?;
    if lines.next() != Some(HEADER) {
        return Err("unexpected header".into());
    }
    let rows = lines
        .enumerate()
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 9 {
                return Err(format!("row {i}: expected 9 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| format!("row {i}: {e}"));
            let mut values = [None; 8];
            for (slot, cell) in values.iter_mut().zip(&cells[1..]) {
                if !cell.is_empty() {
                    *slot = Some(num(cell)?);
                }
            }
            Ok(CsvRow {
                sigma_s2: num(cells[0])?,
                values,
            })
        })
        .collect::<Result<_, String>>()?;
    Ok((meta, rows))
}
