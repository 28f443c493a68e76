//! Minimal SVG chart rendering, no drawing dependencies.
//!
//! Four chart kinds cover the reporting pipeline: single/multi line plots,
//! a mean line with a +/- std band over per-seed traces, bar charts, and
//! occupancy heatmaps. Rendering is pure string building, so outputs are
//! deterministic byte-for-byte.

use std::fmt::Write as _;

use thiserror::Error;

use crate::metrics::{self, HeatmapGrid, SeedAggregate, SeriesStat};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("nothing to plot")]
    EmptyData,
    #[error("series lengths differ: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("series `{0}` contains a non-finite value")]
    NonFinite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Line,
    MultilineWithBand,
    Bar,
    Heatmap,
}

/// What to draw and how to label it. `x0`/`x_step` place sample `i` at
/// `x0 + i * x_step`; `window` smooths each series before drawing.
#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub window: Option<usize>,
    pub x0: f64,
    pub x_step: f64,
}

impl PlotSpec {
    pub fn new(kind: PlotKind, title: &str, x_label: &str, y_label: &str) -> Self {
        PlotSpec {
            kind,
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            window: None,
            x0: 0.0,
            x_step: 1.0,
        }
    }

    pub fn with_window(mut self, window: Option<usize>) -> Self {
        self.window = window;
        self
    }

    pub fn with_x(mut self, x0: f64, x_step: f64) -> Self {
        self.x0 = x0;
        self.x_step = x_step;
        self
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 56.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Short human label for an axis tick.
fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if v.abs() >= 10000.0 || v.abs() < 0.001 {
        return format!("{v:.1e}");
    }
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

/// Data-to-pixel mapping for the plot area.
struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    /// Pads the y range by 5% and widens degenerate ranges so constant
    /// data still lands mid-plot.
    fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        let (x_min, x_max) = if x_max > x_min {
            (x_min, x_max)
        } else {
            (x_min - 0.5, x_min + 0.5)
        };
        let (y_min, y_max) = if y_max > y_min {
            let pad = 0.05 * (y_max - y_min);
            (y_min - pad, y_max + pad)
        } else {
            let pad = if y_min == 0.0 { 1.0 } else { y_min.abs() * 0.1 };
            (y_min - pad, y_max + pad)
        };
        Frame { x_min, x_max, y_min, y_max }
    }

    fn x_px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y_px(&self, y: f64) -> f64 {
        MARGIN_TOP
            + (1.0 - (y - self.y_min) / (self.y_max - self.y_min)) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        xml_escape(title)
    );
}

fn draw_axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let left = MARGIN_LEFT;
    let right = WIDTH - MARGIN_RIGHT;
    let top = MARGIN_TOP;
    let bottom = HEIGHT - MARGIN_BOTTOM;
    let _ = writeln!(
        out,
        "<line x1=\"{left:.2}\" y1=\"{bottom:.2}\" x2=\"{right:.2}\" y2=\"{bottom:.2}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        out,
        "<line x1=\"{left:.2}\" y1=\"{top:.2}\" x2=\"{left:.2}\" y2=\"{bottom:.2}\" stroke=\"black\"/>"
    );
    for i in 0..5 {
        let t = i as f64 / 4.0;
        let xv = frame.x_min + t * (frame.x_max - frame.x_min);
        let yv = frame.y_min + t * (frame.y_max - frame.y_min);
        let xp = frame.x_px(xv);
        let yp = frame.y_px(yv);
        let _ = writeln!(
            out,
            "<line x1=\"{xp:.2}\" y1=\"{bottom:.2}\" x2=\"{xp:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
            bottom + 5.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{xp:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            bottom + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{yp:.2}\" x2=\"{left:.2}\" y2=\"{yp:.2}\" stroke=\"black\"/>",
            left - 5.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{}</text>",
            left - 8.0,
            yp + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        (left + right) / 2.0,
        HEIGHT - 14.0,
        xml_escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"18\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">{}</text>",
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        xml_escape(y_label)
    );
}

fn draw_legend(out: &mut String, names: &[(String, &str)]) {
    let x = WIDTH - MARGIN_RIGHT - 140.0;
    for (i, (name, col)) in names.iter().enumerate() {
        let y = MARGIN_TOP + 8.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            "<line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{col}\" stroke-width=\"2\"/>",
            x + 18.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{}</text>",
            x + 24.0,
            y + 4.0,
            xml_escape(name)
        );
    }
}

fn polyline_points(frame: &Frame, spec: &PlotSpec, values: &[f64]) -> String {
    let mut pts = String::new();
    for (i, &v) in values.iter().enumerate() {
        let _ = write!(
            pts,
            "{}{:.2},{:.2}",
            if i == 0 { "" } else { " " },
            frame.x_px(spec.x0 + i as f64 * spec.x_step),
            frame.y_px(v)
        );
    }
    pts
}

fn check_series(series: &[SeriesStat]) -> Result<(), PlotError> {
    if series.is_empty() || series.iter().all(|s| s.values.is_empty()) {
        return Err(PlotError::EmptyData);
    }
    for s in series {
        if s.values.iter().any(|v| !v.is_finite()) {
            return Err(PlotError::NonFinite(s.label.clone()));
        }
    }
    Ok(())
}

fn smoothed(spec: &PlotSpec, values: &[f64]) -> Vec<f64> {
    match spec.window {
        Some(w) if w > 1 => metrics::sliding_average(values, w),
        _ => values.to_vec(),
    }
}

/// One polyline per series, with a legend when there is more than one.
pub fn line_svg(spec: &PlotSpec, series: &[SeriesStat]) -> Result<String, PlotError> {
    check_series(series)?;
    let smoothed: Vec<SeriesStat> = series
        .iter()
        .map(|s| SeriesStat::new(s.label.clone(), smoothed(spec, &s.values)))
        .collect();
    let longest = smoothed.iter().map(|s| s.values.len()).max().unwrap();
    let y_min = smoothed.iter().flat_map(|s| s.values.iter()).cloned().fold(f64::INFINITY, f64::min);
    let y_max = smoothed.iter().flat_map(|s| s.values.iter()).cloned().fold(f64::NEG_INFINITY, f64::max);
    let frame = Frame::new(
        spec.x0,
        spec.x0 + (longest.max(2) - 1) as f64 * spec.x_step,
        y_min,
        y_max,
    );

    let mut out = String::new();
    svg_open(&mut out, &spec.title);
    draw_axes(&mut out, &frame, &spec.x_label, &spec.y_label);
    for (i, s) in smoothed.iter().enumerate() {
        if s.values.is_empty() {
            continue;
        }
        let _ = writeln!(
            out,
            "<polyline class=\"series\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.6\" points=\"{}\"/>",
            color(i),
            polyline_points(&frame, spec, &s.values)
        );
    }
    if smoothed.len() > 1 {
        let names: Vec<(String, &str)> = smoothed
            .iter()
            .enumerate()
            .map(|(i, s)| (s.label.clone(), color(i)))
            .collect();
        draw_legend(&mut out, &names);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Mean line with a +/-1 std band, over faint per-seed traces. At points
/// where the std is zero the band collapses onto the mean line.
pub fn band_svg(
    spec: &PlotSpec,
    per_seed: &[SeriesStat],
    agg: &SeedAggregate,
) -> Result<String, PlotError> {
    if agg.mean.is_empty() {
        return Err(PlotError::EmptyData);
    }
    if agg.mean.len() != agg.std.len() {
        return Err(PlotError::LengthMismatch { a: agg.mean.len(), b: agg.std.len() });
    }
    for s in per_seed {
        if s.values.len() != agg.mean.len() {
            return Err(PlotError::LengthMismatch { a: agg.mean.len(), b: s.values.len() });
        }
        if s.values.iter().any(|v| !v.is_finite()) {
            return Err(PlotError::NonFinite(s.label.clone()));
        }
    }
    if agg.mean.iter().chain(agg.std.iter()).any(|v| !v.is_finite()) {
        return Err(PlotError::NonFinite("aggregate".to_string()));
    }

    let upper: Vec<f64> = agg.mean.iter().zip(&agg.std).map(|(m, s)| m + s).collect();
    let lower: Vec<f64> = agg.mean.iter().zip(&agg.std).map(|(m, s)| m - s).collect();
    let mut y_min = lower.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut y_max = upper.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for s in per_seed {
        y_min = s.values.iter().cloned().fold(y_min, f64::min);
        y_max = s.values.iter().cloned().fold(y_max, f64::max);
    }
    let frame = Frame::new(
        spec.x0,
        spec.x0 + (agg.mean.len().max(2) - 1) as f64 * spec.x_step,
        y_min,
        y_max,
    );

    let mut out = String::new();
    svg_open(&mut out, &spec.title);
    draw_axes(&mut out, &frame, &spec.x_label, &spec.y_label);

    // Band polygon: upper edge left to right, then lower edge back.
    let mut pts = polyline_points(&frame, spec, &upper);
    for (i, &v) in lower.iter().enumerate().rev() {
        let _ = write!(
            pts,
            " {:.2},{:.2}",
            frame.x_px(spec.x0 + i as f64 * spec.x_step),
            frame.y_px(v)
        );
    }
    let _ = writeln!(
        out,
        "<polygon class=\"band\" fill=\"{}\" fill-opacity=\"0.25\" stroke=\"none\" points=\"{pts}\"/>",
        color(0)
    );
    for s in per_seed {
        let _ = writeln!(
            out,
            "<polyline class=\"seed\" fill=\"none\" stroke=\"#888888\" stroke-width=\"0.8\" stroke-opacity=\"0.6\" points=\"{}\"/>",
            polyline_points(&frame, spec, &s.values)
        );
    }
    let _ = writeln!(
        out,
        "<polyline class=\"mean\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>",
        color(0),
        polyline_points(&frame, spec, &agg.mean)
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">mean of {} seeds, band: +/-1 std</text>",
        MARGIN_LEFT + 6.0,
        MARGIN_TOP + 14.0,
        agg.n_seeds
    );
    out.push_str("</svg>\n");
    Ok(out)
}

/// Labeled vertical bars, y axis from zero.
pub fn bar_svg(spec: &PlotSpec, labels: &[String], values: &[f64]) -> Result<String, PlotError> {
    if values.is_empty() {
        return Err(PlotError::EmptyData);
    }
    if labels.len() != values.len() {
        return Err(PlotError::LengthMismatch { a: labels.len(), b: values.len() });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(PlotError::NonFinite(spec.title.clone()));
    }
    let y_max = values.iter().cloned().fold(0.0, f64::max);
    let frame = Frame::new(0.0, values.len() as f64, 0.0, if y_max > 0.0 { y_max } else { 1.0 });

    let mut out = String::new();
    svg_open(&mut out, &spec.title);
    draw_axes(&mut out, &frame, &spec.x_label, &spec.y_label);
    let slot = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / values.len() as f64;
    let bar_w = slot * 0.6;
    let base = frame.y_px(0.0);
    for (i, (&v, label)) in values.iter().zip(labels).enumerate() {
        let cx = MARGIN_LEFT + slot * (i as f64 + 0.5);
        let top = frame.y_px(v.max(0.0));
        let _ = writeln!(
            out,
            "<rect class=\"bar\" x=\"{:.2}\" y=\"{top:.2}\" width=\"{bar_w:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
            cx - bar_w / 2.0,
            (base - top).max(0.0),
            color(0)
        );
        let _ = writeln!(
            out,
            "<text x=\"{cx:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            top - 5.0,
            tick_label(v)
        );
        let _ = writeln!(
            out,
            "<text x=\"{cx:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            base + 18.0,
            xml_escape(label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Occupancy colormap over the square world, darker is more visited.
/// Zero-count cells keep the white background.
pub fn heatmap_svg(grid: &HeatmapGrid, title: &str) -> String {
    let res = grid.resolution;
    let max = grid.max_count().max(1) as f64;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT - 80.0;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let side = (plot_w.min(plot_h)) / res as f64;
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP;
    let span = side * res as f64;

    let shade = |t: f64| -> String {
        let lerp = |a: f64, b: f64| (a + t * (b - a)).round() as u8;
        format!("rgb({},{},{})", lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0))
    };

    let mut out = String::new();
    svg_open(&mut out, title);
    let _ = writeln!(
        out,
        "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{span:.2}\" height=\"{span:.2}\" fill=\"white\" stroke=\"black\"/>"
    );
    for y in 0..res {
        for x in 0..res {
            let count = grid.cell(x, y);
            if count == 0 {
                continue;
            }
            // Grid row 0 is world y = -bound, drawn at the bottom.
            let px = x0 + x as f64 * side;
            let py = y0 + span - (y + 1) as f64 * side;
            let _ = writeln!(
                out,
                "<rect class=\"cell\" x=\"{px:.2}\" y=\"{py:.2}\" width=\"{side:.2}\" height=\"{side:.2}\" fill=\"{}\"/>",
                shade(count as f64 / max)
            );
        }
    }
    for (frac, anchor, label) in [
        (0.0, "start", format!("{}", tick_label(-grid.bound))),
        (0.5, "middle", "0".to_string()),
        (1.0, "end", tick_label(grid.bound)),
    ] {
        let px = x0 + frac * span;
        let _ = writeln!(
            out,
            "<text x=\"{px:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"{anchor}\">{label}</text>",
            y0 + span + 16.0
        );
        let py = y0 + span - frac * span;
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{label}</text>",
            x0 - 6.0,
            py + 4.0
        );
    }
    // Legend: vertical ramp from 0 to the max cell count.
    let lx = x0 + span + 24.0;
    let steps = 8;
    let lh = span / steps as f64;
    for i in 0..steps {
        let t = (steps - i) as f64 / steps as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{lx:.2}\" y=\"{:.2}\" width=\"16\" height=\"{lh:.2}\" fill=\"{}\" stroke=\"none\"/>",
            y0 + i as f64 * lh,
            shade(t)
        );
    }
    let _ = writeln!(
        out,
        "<rect x=\"{lx:.2}\" y=\"{y0:.2}\" width=\"16\" height=\"{span:.2}\" fill=\"none\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{}</text>",
        lx + 22.0,
        y0 + 10.0,
        grid.max_count()
    );
    let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">0</text>", lx + 22.0, y0 + span);
    out.push_str("</svg>\n");
    out
}
