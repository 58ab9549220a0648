//! SVG charts rendered straight from metrics CSVs.
//!
//! Four charts per invocation: penalty coefficient, batch accuracy, and mean
//! length against step, plus an accuracy-versus-length scatter over the run.
//! Output is plain hand-written SVG (polylines, circles, text), a pure
//! function of the CSV contents.

use crate::error::{Error, Result};
use crate::harness::metrics::read_metrics_csv;
use crate::trainer::StepRecord;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 500.0;
pub const MARGIN_LEFT: f64 = 70.0;
pub const MARGIN_RIGHT: f64 = 20.0;
pub const MARGIN_TOP: f64 = 40.0;
pub const MARGIN_BOTTOM: f64 = 50.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Affine map from data values to pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearScale {
    pub min: f64,
    pub max: f64,
    pub px_lo: f64,
    pub px_hi: f64,
}

impl LinearScale {
    /// Fit the value range, padding degenerate (constant) ranges so a flat
    /// series still lands mid-axis.
    pub fn fit(min: f64, max: f64, px_lo: f64, px_hi: f64) -> LinearScale {
        let (min, max) = if (max - min).abs() < f64::EPSILON {
            let pad = if min == 0.0 { 0.5 } else { min.abs() * 0.1 };
            (min - pad, max + pad)
        } else {
            (min, max)
        };
        LinearScale {
            min,
            max,
            px_lo,
            px_hi,
        }
    }

    pub fn to_px(&self, v: f64) -> f64 {
        self.px_lo + (v - self.min) / (self.max - self.min) * (self.px_hi - self.px_lo)
    }

    pub fn from_px(&self, px: f64) -> f64 {
        self.min + (px - self.px_lo) / (self.px_hi - self.px_lo) * (self.max - self.min)
    }
}

struct Series<'a> {
    name: String,
    points: Vec<(f64, f64)>,
    color: &'a str,
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a >= 0.01 && a < 10000.0 {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn render_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], scatter: bool) -> String {
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let ys: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect();
    let fold = |v: &[f64], init: f64, f: fn(f64, f64) -> f64| v.iter().copied().fold(init, f);
    let x_scale = LinearScale::fit(
        fold(&xs, f64::INFINITY, f64::min),
        fold(&xs, f64::NEG_INFINITY, f64::max),
        MARGIN_LEFT,
        WIDTH - MARGIN_RIGHT,
    );
    let y_scale = LinearScale::fit(
        fold(&ys, f64::INFINITY, f64::min),
        fold(&ys, f64::NEG_INFINITY, f64::max),
        HEIGHT - MARGIN_BOTTOM,
        MARGIN_TOP,
    );

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        title
    );
    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" y2="{}" stroke="black"/>"#,
        HEIGHT - MARGIN_BOTTOM
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN_LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        HEIGHT - MARGIN_BOTTOM,
        WIDTH - MARGIN_RIGHT,
        HEIGHT - MARGIN_BOTTOM
    );
    // ticks
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let vx = x_scale.min + t * (x_scale.max - x_scale.min);
        let px = x_scale.to_px(vx);
        let _ = writeln!(
            svg,
            r#"<line x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="black"/>"#,
            HEIGHT - MARGIN_BOTTOM,
            HEIGHT - MARGIN_BOTTOM + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{px}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN_BOTTOM + 18.0,
            fmt_tick(vx)
        );
        let vy = y_scale.min + t * (y_scale.max - y_scale.min);
        let py = y_scale.to_px(vy);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{py}" x2="{MARGIN_LEFT}" y2="{py}" stroke="black"/>"#,
            MARGIN_LEFT - 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 8.0,
            py + 4.0,
            fmt_tick(vy)
        );
    }
    // axis labels
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        HEIGHT - 12.0,
        x_label
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
        y_label
    );
    // series
    for s in series {
        if scatter {
            for &(x, y) in &s.points {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{}" cy="{}" r="2.5" fill="{}" fill-opacity="0.7"/>"#,
                    x_scale.to_px(x),
                    y_scale.to_px(y),
                    s.color
                );
            }
        } else {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{},{}", x_scale.to_px(x), y_scale.to_px(y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                pts.join(" "),
                s.color
            );
        }
    }
    // legend: one entry per series
    for (i, s) in series.iter().enumerate() {
        let y = MARGIN_TOP + 8.0 + i as f64 * 18.0;
        let x = WIDTH - MARGIN_RIGHT - 180.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="3"/>"#,
            x + 22.0,
            s.color
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            x + 28.0,
            y + 4.0,
            s.name
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn series_from<'a>(
    runs: &[(String, Vec<StepRecord>)],
    extract: impl Fn(&StepRecord) -> (f64, f64),
) -> Vec<Series<'a>> {
    runs.iter()
        .enumerate()
        .map(|(i, (name, records))| Series {
            name: name.clone(),
            points: records.iter().map(&extract).collect(),
            color: PALETTE[i % PALETTE.len()],
        })
        .collect()
}

/// Render the four standard charts from one or more metrics CSVs; each input
/// file becomes one legend entry per chart. Returns the written paths.
pub fn emit_plots(csv_paths: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if csv_paths.is_empty() {
        return Err(Error::validation("emit_plots needs at least one CSV"));
    }
    let mut runs = Vec::new();
    for path in csv_paths {
        let records = read_metrics_csv(path)?;
        if records.is_empty() {
            return Err(Error::CsvFormat {
                path: path.display().to_string(),
                row: 2,
                column: "step".to_string(),
                detail: "no data rows".to_string(),
            });
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        runs.push((name, records));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;

    let charts: [(&str, &str, &str, Box<dyn Fn(&StepRecord) -> (f64, f64)>, bool); 4] = [
        (
            "lambda_vs_step.svg",
            "penalty coefficient vs training step",
            "lambda",
            Box::new(|r| (r.step as f64, r.lambda)),
            false,
        ),
        (
            "accuracy_vs_step.svg",
            "batch accuracy vs training step",
            "accuracy",
            Box::new(|r| (r.step as f64, r.acc_train)),
            false,
        ),
        (
            "mean_len_vs_step.svg",
            "mean response length vs training step",
            "mean length (tokens)",
            Box::new(|r| (r.step as f64, r.mean_len)),
            false,
        ),
        (
            "accuracy_vs_length.svg",
            "accuracy vs response length over training",
            "accuracy",
            Box::new(|r| (r.mean_len, r.acc_train)),
            true,
        ),
    ];

    let mut written = Vec::new();
    for (file, title, y_label, extract, scatter) in charts {
        let series = series_from(&runs, extract);
        let x_label = if scatter { "mean length (tokens)" } else { "step" };
        let svg = render_chart(title, x_label, y_label, &series, scatter);
        let path = out_dir.join(file);
        std::fs::write(&path, svg).map_err(|e| Error::io(path.display().to_string(), e))?;
        written.push(path);
    }
    Ok(written)
}
