use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalefit::{FitResult, ScalingPoint};
use crate::util;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const CURVE_SAMPLES: usize = 200;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlotOptions {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Log-scale y axis; x is always log-scaled.
    pub log_y: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64> + Clone, log: bool) -> Self {
        let t = |v: f64| if log { v.log10() } else { v };
        let lo = values.clone().map(t).fold(f64::INFINITY, f64::min);
        let hi = values.map(t).fold(f64::NEG_INFINITY, f64::max);
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
        Self {
            lo: lo - pad,
            hi: hi + pad,
            log,
        }
    }

    /// Fraction of the way along the axis.
    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let first = self.lo.ceil() as i32;
            let last = self.hi.floor() as i32;
            let step = ((last - first) / 6 + 1).max(1);
            (first..=last).step_by(step as usize).map(|e| 10f64.powi(e)).collect()
        } else {
            (0..5)
                .map(|i| self.lo + (self.hi - self.lo) * (0.5 + i as f64) / 5.0)
                .collect()
        }
    }
}

/// Renders a scatter of `points` with the fitted curve as an SVG document.
///
/// Markers are `<circle>` elements and the fitted curve, sampled at 200
/// log-spaced x values across the data range, is the only `<path>`.
pub fn render_svg(points: &[ScalingPoint], fit: Option<&FitResult>, opts: &PlotOptions) -> Result<String> {
    if points.is_empty() {
        return Err(Error::Input("nothing to plot".into()));
    }
    if points.iter().any(|p| !(p.x > 0.0) || !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::Input("plot points need positive finite x and finite y".into()));
    }
    if opts.log_y && points.iter().any(|p| p.y <= 0.0) {
        return Err(Error::Input("log-scale y needs positive values".into()));
    }
    let x_min = points.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let x_max = points.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let curve: Vec<(f64, f64)> = match fit {
        Some(f) => (0..CURVE_SAMPLES)
            .map(|i| {
                let t = i as f64 / (CURVE_SAMPLES - 1) as f64;
                let x = (x_min.ln() + t * (x_max.ln() - x_min.ln())).exp();
                Ok((x, f.predict(x)?))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|(_, y)| y.is_finite() && (!opts.log_y || *y > 0.0))
            .collect(),
        None => Vec::new(),
    };
    let xs = Axis::new(points.iter().map(|p| p.x), true);
    let ys = Axis::new(
        points.iter().map(|p| p.y).chain(curve.iter().map(|c| c.1)),
        opts.log_y,
    );
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + xs.frac(x) * plot_w;
    let py = |y: f64| TOP + (1.0 - ys.frac(y)) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(&opts.title)
    );
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{y1:.2}" x2="{x1:.2}" y2="{y1:.2}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="black"/>"#);
    for t in xs.ticks() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(t),
            y1 + 18.0,
            fmt_num(t)
        );
    }
    for t in ys.ticks() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            py(t) + 4.0,
            fmt_num(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 16.0,
        escape(&opts.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(&opts.y_label)
    );
    if !curve.is_empty() {
        let mut d = String::new();
        for (i, (x, y)) in curve.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, px(*x), py(*y));
        }
        let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="steelblue" stroke-width="2"/>"#);
    }
    for p in points {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="darkorange" stroke="black"/>"#,
            px(p.x),
            py(p.y)
        );
    }
    if let Some(f) = fit {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">R² = {:.4}  exponent = {:.4}  floor = {}</text>"#,
            x1 - 4.0,
            y0 + 14.0,
            f.r2,
            f.exponent,
            fmt_num(f.floor)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(
    points: &[ScalingPoint],
    fit: Option<&FitResult>,
    opts: &PlotOptions,
    path: &Path,
) -> Result<()> {
    util::write_atomic(path, render_svg(points, fit, opts)?.as_bytes())
}
