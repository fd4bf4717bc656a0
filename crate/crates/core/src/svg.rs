//! Self-contained SVG plots written directly as text.
//!
//! Output depends only on the input traces: coordinates are printed with a
//! fixed number of decimals and no timestamps or random ids are embedded.

use std::fmt::Write as _;
use std::io::{self, Write};

use thiserror::Error;

use crate::harness::ConvergenceTrace;
use crate::measurement::Point;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Cost against iteration, one series per trace.
    Convergence,
    /// Iterate paths over the receiver layout.
    Trajectory,
}

/// Receiver layout and ground truth for trajectory plots.
#[derive(Debug, Clone, Copy)]
pub struct Geometry<'a> {
    pub receivers: &'a [Point],
    pub transmitter: Point,
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [(&str, &str); 5] = [
    ("#1f5fbf", ""),
    ("#f08c00", "8 4"),
    ("#00a6c8", "2 3"),
    ("#c2188f", "10 3 2 3"),
    ("#2a9d3a", "4 2"),
];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn plot_w() -> f64 {
        WIDTH - LEFT - RIGHT
    }

    fn plot_h() -> f64 {
        HEIGHT - TOP - BOTTOM
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * Self::plot_w()
    }

    fn py(&self, y: f64) -> f64 {
        TOP + (self.y.1 - y) / (self.y.1 - self.y.0) * Self::plot_h()
    }
}

/// Widens a degenerate or inverted range.
fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, lo + pad)
    }
}

/// Tick positions on a 1-2-5 grid covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e5 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str, title: &str) {
    let (w, h) = (Frame::plot_w(), Frame::plot_h());
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT}" y="{TOP}" width="{w}" height="{h}" fill="none" stroke="#333" stroke-width="1"/>"##
    );
    for t in ticks(frame.x.0, frame.x.1) {
        let x = frame.px(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP,
            TOP + h,
            TOP + h + 18.0,
            label(t)
        );
    }
    for t in ticks(frame.y.0, frame.y.1) {
        let y = frame.py(t);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + w,
            LEFT - 6.0,
            y + 4.0,
            label(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + w / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let cy = TOP + h / 2.0;
    let _ = writeln!(
        out,
        r#"<text x="20" y="{cy:.2}" text-anchor="middle" transform="rotate(-90 20 {cy:.2})">{}</text>"#,
        escape(y_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-weight="bold">{}</text>"#,
        LEFT + w / 2.0,
        escape(title)
    );
}

fn legend(out: &mut String, names: &[String]) {
    let x = WIDTH - RIGHT + 15.0;
    for (idx, name) in names.iter().enumerate() {
        let (color, dash) = PALETTE[idx % PALETTE.len()];
        let y = TOP + 10.0 + 22.0 * idx as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2" stroke-dasharray="{dash}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 30.0,
            x + 36.0,
            y + 4.0,
            escape(name)
        );
    }
}

fn polyline(points: impl Iterator<Item = (f64, f64)>) -> String {
    points
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn series_names(traces: &[ConvergenceTrace]) -> Vec<String> {
    traces.iter().map(|t| t.algorithm.name().to_string()).collect()
}

fn header(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
}

fn convergence(traces: &[ConvergenceTrace]) -> String {
    let finite = |v: &f64| v.is_finite();
    let costs = traces
        .iter()
        .flat_map(|t| t.records.iter().map(|r| r.cost))
        .filter(finite);
    let (lo, hi) = costs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c), hi.max(c)));
    let (lo, hi) = if lo.is_finite() { (lo.min(0.0), hi) } else { (0.0, 1.0) };
    let last = traces
        .iter()
        .filter_map(|t| t.records.last())
        .map(|r| r.iteration)
        .max()
        .unwrap_or(0);
    let frame = Frame {
        x: padded(0.0, last as f64),
        y: padded(lo, hi),
    };
    let title = format!("{} - convergence", traces[0].scenario_id);

    let mut out = String::new();
    header(&mut out);
    axes(&mut out, &frame, "Number of iterations", "Cost function J", &title);
    for (idx, t) in traces.iter().enumerate() {
        let (color, dash) = PALETTE[idx % PALETTE.len()];
        let pts = polyline(
            t.records
                .iter()
                .filter(|r| r.cost.is_finite())
                .map(|r| (frame.px(r.iteration as f64), frame.py(r.cost))),
        );
        let _ = writeln!(
            out,
            r#"<polyline class="series" data-name="{}" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5" stroke-dasharray="{dash}"/>"#,
            escape(t.algorithm.name())
        );
    }
    legend(&mut out, &series_names(traces));
    out.push_str("</svg>\n");
    out
}

fn trajectory(traces: &[ConvergenceTrace], geometry: &Geometry<'_>) -> String {
    let all = geometry
        .receivers
        .iter()
        .copied()
        .chain(std::iter::once(geometry.transmitter))
        .chain(traces.iter().flat_map(|t| t.records.iter().map(|r| r.position)))
        .filter(|p| p.x.is_finite() && p.y.is_finite());
    let (mut xlo, mut xhi, mut ylo, mut yhi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in all {
        xlo = xlo.min(p.x);
        xhi = xhi.max(p.x);
        ylo = ylo.min(p.y);
        yhi = yhi.max(p.y);
    }
    // Same meters-per-pixel on both axes.
    let span = (xhi - xlo)
        .max((yhi - ylo) * Frame::plot_w() / Frame::plot_h())
        .max(1.0)
        * 1.1;
    let (cx, cy) = ((xlo + xhi) / 2.0, (ylo + yhi) / 2.0);
    let yspan = span * Frame::plot_h() / Frame::plot_w();
    let frame = Frame {
        x: (cx - span / 2.0, cx + span / 2.0),
        y: (cy - yspan / 2.0, cy + yspan / 2.0),
    };
    let title = format!("{} - position estimates", traces[0].scenario_id);

    let mut out = String::new();
    header(&mut out);
    axes(&mut out, &frame, "X [m]", "Y [m]", &title);
    for (idx, t) in traces.iter().enumerate() {
        let (color, dash) = PALETTE[idx % PALETTE.len()];
        let name = escape(t.algorithm.name());
        let pts: Vec<(f64, f64)> = t
            .records
            .iter()
            .filter(|r| r.position.x.is_finite() && r.position.y.is_finite())
            .map(|r| (frame.px(r.position.x), frame.py(r.position.y)))
            .collect();
        if pts.len() > 1 {
            let _ = writeln!(
                out,
                r#"<polyline class="series" data-name="{name}" points="{}" fill="none" stroke="{color}" stroke-width="1.2" stroke-dasharray="{dash}"/>"#,
                polyline(pts.iter().copied())
            );
        }
        let _ = writeln!(out, r#"<g class="markers" data-name="{name}" fill="{color}">"#);
        for (x, y) in &pts {
            let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2"/>"#);
        }
        out.push_str("</g>\n");
    }
    for (idx, r) in geometry.receivers.iter().enumerate() {
        let (x, y) = (frame.px(r.x), frame.py(r.y));
        let _ = writeln!(
            out,
            r##"<rect class="receiver" x="{:.2}" y="{:.2}" width="10" height="10" fill="#f2d024" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">r{}</text>"##,
            x - 5.0,
            y - 5.0,
            x - 8.0,
            y - 8.0,
            idx + 1
        );
    }
    let (tx, ty) = (frame.px(geometry.transmitter.x), frame.py(geometry.transmitter.y));
    let star = polyline((0..5).map(|k| {
        let a = -std::f64::consts::FRAC_PI_2 + k as f64 * 2.0 * std::f64::consts::PI / 5.0;
        (tx + 8.0 * a.cos(), ty + 8.0 * a.sin())
    }));
    let _ = writeln!(
        out,
        r##"<polygon class="transmitter" points="{star}" fill="#e4572e" stroke="black"/><text x="{:.2}" y="{:.2}">Tx</text>"##,
        tx + 10.0,
        ty + 4.0
    );
    legend(&mut out, &series_names(traces));
    out.push_str("</svg>\n");
    out
}

/// Renders `traces` as one SVG document into `sink`.
pub fn emit_svg<W: Write>(
    traces: &[ConvergenceTrace],
    kind: PlotKind,
    geometry: Option<&Geometry<'_>>,
    sink: &mut W,
) -> Result<(), PlotError> {
    if traces.is_empty() {
        return Err(PlotError::InvalidArgument("no traces to plot".into()));
    }
    let doc = match kind {
        PlotKind::Convergence => convergence(traces),
        PlotKind::Trajectory => {
            let geometry = geometry
                .ok_or_else(|| PlotError::InvalidArgument("trajectory plots need the receiver geometry".into()))?;
            trajectory(traces, geometry)
        }
    };
    sink.write_all(doc.as_bytes())?;
    Ok(())
}
