//! Cross-run CSV tables and SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::manifest::RunManifest;
use crate::attacks::ATTACK_CSV_HEADER;
use crate::error::{Error, Result};

pub const LEARNING_CURVE_FILE: &str = "learning_curve.csv";
pub const TRADEOFF_FILE: &str = "tradeoff.csv";
pub const LEARNING_CURVE_PLOT: &str = "learning_curve.svg";
pub const EXPOSURE_PLOT: &str = "exposure_vs_perplexity.svg";
pub const MI_PLOT: &str = "mi_vs_perplexity.svg";

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];
const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Line (or scatter) plot with four axis ticks per side and a legend.
pub fn svg_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], connect: bool) -> String {
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{xv:.2}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{LEFT}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.2}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        if connect && ser.points.len() > 1 {
            let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        }
        for &(x, y) in &ser.points {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{colour}"/>"#, sx(x), sy(y));
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.1}" y="{:.1}" width="10" height="10" fill="{colour}"/><text x="{:.1}" y="{ly:.1}">{}</text>"#,
            ly - 9.0,
            lx + 15.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn series_name(m: &RunManifest) -> String {
    if m.config.run_id == m.config.regime.as_str() {
        m.config.run_id.clone()
    } else {
        format!("{} ({})", m.config.run_id, m.config.regime)
    }
}

/// Writes the learning-curve and trade-off tables plus their plots into
/// `out`; returns the written paths.
pub fn report(out: &Path, manifests: &[RunManifest]) -> Result<Vec<PathBuf>> {
    if manifests.is_empty() || manifests.iter().all(|m| m.epochs.is_empty()) {
        return Err(Error::InvalidArgument("no epochs to report".into()));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut curve = String::from("run_id,regime,epoch,valid_perplexity\n");
    let mut tradeoff = String::from(ATTACK_CSV_HEADER);
    tradeoff.push('\n');
    let (mut ppl_series, mut exp_series, mut mi_series) = (Vec::new(), Vec::new(), Vec::new());
    for m in manifests {
        for e in &m.epochs {
            let _ = writeln!(curve, "{},{},{},{}", m.config.run_id, m.config.regime, e.epoch, e.valid_perplexity);
        }
        for a in &m.attacks {
            tradeoff.push_str(&a.csv_row());
            tradeoff.push('\n');
        }
        let name = series_name(m);
        ppl_series.push(Series {
            name: name.clone(),
            points: m.epochs.iter().map(|e| (e.epoch as f64, e.valid_perplexity)).collect(),
        });
        exp_series.push(Series {
            name: name.clone(),
            points: m.attacks.iter().map(|a| (a.valid_perplexity, a.exposure)).collect(),
        });
        mi_series.push(Series {
            name,
            points: m.attacks.iter().map(|a| (a.valid_perplexity, a.mi_accuracy)).collect(),
        });
    }

    let files = [
        (LEARNING_CURVE_FILE, curve),
        (TRADEOFF_FILE, tradeoff),
        (
            LEARNING_CURVE_PLOT,
            svg_plot("Validation perplexity", "epoch", "perplexity", &ppl_series, true),
        ),
        (
            EXPOSURE_PLOT,
            svg_plot("Canary exposure", "validation perplexity", "exposure", &exp_series, true),
        ),
        (
            MI_PLOT,
            svg_plot("Membership inference", "validation perplexity", "accuracy", &mi_series, true),
        ),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let path = out.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Loads manifests from disk and reports them.
pub fn report_paths(out: &Path, manifest_paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let manifests = manifest_paths
        .iter()
        .map(|p| RunManifest::load(p))
        .collect::<Result<Vec<_>>>()?;
    report(out, &manifests)
}
