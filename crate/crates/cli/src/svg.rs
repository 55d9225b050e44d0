//! Static log-log plot of a sweep.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use mmse_poincare_core::mc::{SweepRow, Z95};

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 560.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

pub struct Series {
    pub key: &'static str,
    pub label: &'static str,
    pub color: &'static str,
    pub dashed: bool,
    /// `(sigma_s2, value, half-width of the 95% interval)`.
    pub points: Vec<(f64, f64, f64)>,
}

pub fn series(rows: &[SweepRow]) -> Vec<Series> {
    let mc = |f: fn(&SweepRow) -> Option<mmse_poincare_core::EstimateCI>| -> Vec<(f64, f64, f64)> {
        rows.iter()
            .filter_map(|r| f(r).map(|e| (r.sigma_s2, e.mean(), Z95 * e.std_error())))
            .collect()
    };
    let exact = |f: fn(&SweepRow) -> Option<f64>| -> Vec<(f64, f64, f64)> {
        rows.iter()
            .filter_map(|r| f(r).map(|v| (r.sigma_s2, v, 0.0)))
            .collect()
    };
    vec![
        Series {
            key: "lb",
            label: "Poincare LB",
            color: "#1f77b4",
            dashed: false,
            points: mc(|r| r.lb),
        },
        Series {
            key: "mmse_t1",
            label: "MMSE (gradient identity)",
            color: "#d62728",
            dashed: false,
            points: mc(|r| r.mmse_t1),
        },
        Series {
            key: "mmse_oracle",
            label: "MMSE (posterior mean)",
            color: "#ff7f0e",
            dashed: true,
            points: mc(|r| r.mmse_oracle),
        },
        Series {
            key: "lmmse",
            label: "LMMSE",
            color: "#2ca02c",
            dashed: false,
            points: exact(|r| r.lmmse),
        },
        Series {
            key: "asymptote",
            label: "LB asymptote",
            color: "#555555",
            dashed: true,
            points: exact(|r| r.asymptote_line),
        },
    ]
    .into_iter()
    .filter(|s| !s.points.is_empty())
    .collect()
}

/// Maps data coordinates to pixels on decade-aligned log axes.
#[derive(Debug, Clone, Copy)]
pub struct LogAxes {
    pub x_decades: (i32, i32),
    pub y_decades: (i32, i32),
}

impl LogAxes {
    fn fit(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Self {
        let range = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it
                .filter(|v| v.is_finite() && *v > 0.0)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                    (a.min(v), b.max(v))
                });
            if !lo.is_finite() {
                return (0, 1);
            }
            let (a, b) = (lo.log10().floor() as i32, hi.log10().ceil() as i32);
            (a, b.max(a + 1))
        };
        Self {
            x_decades: range(&mut { xs }),
            y_decades: range(&mut { ys }),
        }
    }

    pub fn px(&self, x: f64) -> f64 {
        let (a, b) = self.x_decades;
        LEFT + (x.log10() - a as f64) / (b - a) as f64 * (WIDTH - LEFT - RIGHT)
    }

    pub fn py(&self, y: f64) -> f64 {
        let (a, b) = self.y_decades;
        HEIGHT - BOTTOM - (y.log10() - a as f64) / (b - a) as f64 * (HEIGHT - TOP - BOTTOM)
    }
}

pub fn render(rows: &[SweepRow], title: &str) -> Result<String, String> {
    if rows.len() < 2 {
        return Err(format!(
            "a plot needs at least 2 grid points, got {}",
            rows.len()
        ));
    }
    let all = series(rows);
    let axes = LogAxes::fit(
        rows.iter().map(|r| r.sigma_s2),
        all.iter().flat_map(|s| s.points.iter().map(|p| p.1)),
    );
    let (ylo, yhi) = (10f64.powi(axes.y_decades.0), 10f64.powi(axes.y_decades.1));
    let clamp = |y: f64| y.clamp(ylo, yhi);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{:.2}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(title)
    )
    .unwrap();

    // Frame, grid and decade ticks.
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    writeln!(s, r#"<g id="axes" stroke="black" fill="none">"#).unwrap();
    writeln!(
        s,
        r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}"/>"#,
        x1 - x0,
        y1 - y0
    )
    .unwrap();
    for d in axes.x_decades.0..=axes.x_decades.1 {
        let x = axes.px(10f64.powi(d));
        writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{y1:.2}" stroke="#dddddd"/>"##
        )
        .unwrap();
        writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" stroke="none" fill="black">1e{d}</text>"#, y1 + 18.0).unwrap();
    }
    for d in axes.y_decades.0..=axes.y_decades.1 {
        let y = axes.py(10f64.powi(d));
        writeln!(
            s,
            r##"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#dddddd"/>"##
        )
        .unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end" stroke="none" fill="black">1e{d}</text>"#, x0 - 6.0, y + 4.0).unwrap();
    }
    writeln!(s, "</g>").unwrap();
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">noise variance sigma_s^2</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0
    )
    .unwrap();
    writeln!(s, r#"<text transform="translate(20 {:.2}) rotate(-90)" text-anchor="middle">mean square error</text>"#, (y0 + y1) / 2.0).unwrap();

    for series in &all {
        let pts: Vec<String> = series
            .points
            .iter()
            .filter(|p| p.1 > 0.0)
            .map(|p| format!("{:.2},{:.2}", axes.px(p.0), axes.py(clamp(p.1))))
            .collect();
        let dash = if series.dashed {
            r#" stroke-dasharray="6,4""#
        } else {
            ""
        };
        writeln!(
            s,
            r#"<polyline class="series" data-series="{}" fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
            series.key,
            series.color,
            pts.join(" ")
        )
        .unwrap();
        let bars: Vec<&(f64, f64, f64)> = series
            .points
            .iter()
            .filter(|p| p.2 > 0.0 && p.1 > 0.0)
            .collect();
        if !bars.is_empty() {
            writeln!(
                s,
                r#"<g class="errorbars" data-series="{}" stroke="{}">"#,
                series.key, series.color
            )
            .unwrap();
            for (x, y, half) in bars {
                let lo = if y - half > 0.0 { y - half } else { ylo };
                writeln!(
                    s,
                    r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}"/>"#,
                    axes.px(*x),
                    axes.py(clamp(lo)),
                    axes.py(clamp(y + half))
                )
                .unwrap();
            }
            writeln!(s, "</g>").unwrap();
        }
    }

    writeln!(s, r#"<g id="legend">"#).unwrap();
    for (i, series) in all.iter().enumerate() {
        let y = TOP + 20.0 + 22.0 * i as f64;
        let x = WIDTH - RIGHT + 15.0;
        let dash = if series.dashed {
            r#" stroke-dasharray="6,4""#
        } else {
            ""
        };
        writeln!(s, r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{}" stroke-width="2"{dash}/>"#, x + 25.0, series.color).unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 32.0,
            y + 4.0,
            escape(series.label)
        )
        .unwrap();
    }
    writeln!(s, "</g>").unwrap();
    writeln!(s, "</svg>").unwrap();
    Ok(s)
}

pub fn emit_svg(rows: &[SweepRow], title: &str, path: &Path) -> io::Result<()> {
    let text = render(rows, title).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    crate::csv::write_atomic(path, text.as_bytes())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
