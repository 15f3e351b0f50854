//! Static SVG plots of coefficient functions.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    /// Solid black line.
    Truth,
    /// Blue squares joined by a thin line.
    Fsl,
    /// Red dashed line.
    Afsl,
}

impl Style {
    fn class(self) -> &'static str {
        match self {
            Style::Truth => "truth",
            Style::Fsl => "fsl",
            Style::Afsl => "afsl",
        }
    }

    fn attrs(self) -> &'static str {
        match self {
            Style::Truth => r#"stroke="black" stroke-width="2""#,
            Style::Fsl => r#"stroke="blue" stroke-width="0.75""#,
            Style::Afsl => r#"stroke="red" stroke-width="2" stroke-dasharray="6 4""#,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub style: Style,
    pub values: Vec<f64>,
}

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 40.0;

fn fmt(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

/// One panel with every series over `grid`. Output depends only on the
/// inputs.
pub fn render_svg(title: &str, grid: &[f64], series: &[Series]) -> Result<String> {
    if grid.len() < 2 {
        return Err(Error::InvalidInput("plot needs at least two grid points".into()));
    }
    if let Some(s) = series.iter().find(|s| s.values.len() != grid.len()) {
        return Err(Error::Dimension(format!(
            "series `{}` has {} values for {} grid points",
            s.label,
            s.values.len(),
            grid.len()
        )));
    }
    let (x0, x1) = (grid[0], grid[grid.len() - 1]);
    let mut lo = series.iter().flat_map(|s| s.values.iter().copied()).fold(f64::INFINITY, f64::min);
    let mut hi = series.iter().flat_map(|s| s.values.iter().copied()).fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        lo = -1.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (hi - y) / (hi - lo) * ph;

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        fmt(WIDTH / 2.0),
        escape(title)
    );
    // Axes and tick labels at the extremes.
    let _ = writeln!(
        out,
        r#"<g stroke="gray" stroke-width="1"><line x1="{l}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{l}" y1="{t}" x2="{l}" y2="{b}"/></g>"#,
        l = fmt(LEFT),
        r = fmt(WIDTH - RIGHT),
        t = fmt(TOP),
        b = fmt(HEIGHT - BOTTOM)
    );
    if lo < 0.0 && hi > 0.0 {
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="lightgray" stroke-width="1"/>"#,
            fmt(LEFT),
            fmt(WIDTH - RIGHT),
            y = fmt(sy(0.0))
        );
    }
    let _ = writeln!(
        out,
        r#"<g font-family="sans-serif" font-size="10"><text x="{}" y="{}" text-anchor="middle">{}</text><text x="{}" y="{}" text-anchor="middle">{}</text><text x="{}" y="{}" text-anchor="end">{}</text><text x="{}" y="{}" text-anchor="end">{}</text></g>"#,
        fmt(LEFT),
        fmt(HEIGHT - BOTTOM + 14.0),
        fmt(x0),
        fmt(WIDTH - RIGHT),
        fmt(HEIGHT - BOTTOM + 14.0),
        fmt(x1),
        fmt(LEFT - 4.0),
        fmt(HEIGHT - BOTTOM),
        fmt(lo),
        fmt(LEFT - 4.0),
        fmt(TOP + 8.0),
        fmt(hi)
    );

    for s in series {
        let pts: Vec<String> = grid
            .iter()
            .zip(&s.values)
            .map(|(&x, &y)| format!("{},{}", fmt(sx(x)), fmt(sy(y))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="{}" fill="none" {} points="{}"/>"#,
            s.style.class(),
            s.style.attrs(),
            pts.join(" ")
        );
        if s.style == Style::Fsl {
            let _ = write!(out, r#"<g class="fsl-markers" fill="none" stroke="blue" stroke-width="1">"#);
            for (&x, &y) in grid.iter().zip(&s.values) {
                let _ = write!(
                    out,
                    r#"<rect x="{}" y="{}" width="5" height="5"/>"#,
                    fmt(sx(x) - 2.5),
                    fmt(sy(y) - 2.5)
                );
            }
            let _ = writeln!(out, "</g>");
        }
    }

    // Legend.
    let _ = writeln!(out, r#"<g font-family="sans-serif" font-size="11">"#);
    for (j, s) in series.iter().enumerate() {
        let y = TOP + 8.0 + 16.0 * j as f64;
        let x = WIDTH - RIGHT - 120.0;
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" {}/><text x="{}" y="{}">{}</text>"#,
            fmt(x),
            fmt(x + 24.0),
            s.style.attrs(),
            fmt(x + 30.0),
            fmt(y + 4.0),
            escape(&s.label),
            y = fmt(y)
        );
        if s.style == Style::Fsl {
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{}" width="5" height="5" fill="none" stroke="blue"/>"#,
                fmt(x + 9.5),
                fmt(y - 2.5)
            );
        }
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, "</svg>");
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Data coordinates of the polyline with the given class, recovered from the
/// SVG text. Intended for checking rendered output.
pub fn polyline_points(svg: &str, class: &str) -> Option<Vec<(f64, f64)>> {
    let tag = format!(r#"<polyline class="{class}""#);
    let start = svg.find(&tag)?;
    let rest = &svg[start..];
    let p = rest.find("points=\"")? + 8;
    let end = rest[p..].find('"')?;
    rest[p..p + end]
        .split_whitespace()
        .map(|pair| {
            let (a, b) = pair.split_once(',')?;
            Some((a.parse().ok()?, b.parse().ok()?))
        })
        .collect()
}
