//! Minimal static SVG reports: line plots and bar charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn header(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n\
         <line x1=\"{MARGIN}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n\
         <text x=\"14\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 {})\">{}</text>\n",
        W / 2.0,
        escape(title),
        H - MARGIN,
        W - MARGIN,
        H - MARGIN,
        H - MARGIN,
        W / 2.0,
        H - 10.0,
        escape(x_label),
        H / 2.0,
        H / 2.0,
        escape(y_label),
    );
}

fn tick_labels(out: &mut String, xr: (f64, f64), yr: (f64, f64)) {
    for (v, x) in [(xr.0, MARGIN), (xr.1, W - MARGIN)] {
        let _ = writeln!(
            out,
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{v:.3}</text>",
            H - MARGIN + 14.0
        );
    }
    for (v, y) in [(yr.0, H - MARGIN), (yr.1, MARGIN)] {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{y}\" text-anchor=\"end\" font-size=\"10\">{v:.2}</text>",
            MARGIN - 4.0
        );
    }
}

/// One `<polyline>` per series, with a legend.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xr = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let yr = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let sx = |x: f64| MARGIN + (x - xr.0) / (xr.1 - xr.0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - yr.0) / (yr.1 - yr.0) * (H - 2.0 * MARGIN);
    let mut out = String::new();
    header(&mut out, title, x_label, y_label);
    tick_labels(&mut out, xr, yr);
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{}</text>",
            W - MARGIN - 150.0,
            MARGIN + 14.0 * (i as f64 + 1.0),
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Vertical bars from zero; non-finite values are drawn as empty slots.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let top = bars
        .iter()
        .map(|b| b.1)
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let mut out = String::new();
    header(&mut out, title, "strategy", y_label);
    tick_labels(&mut out, (0.0, bars.len() as f64), (0.0, top));
    let slot = (W - 2.0 * MARGIN) / bars.len().max(1) as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = MARGIN + slot * i as f64 + 0.15 * slot;
        if v.is_finite() {
            let h = v / top * (H - 2.0 * MARGIN);
            let _ = writeln!(
                out,
                "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"{}\"/>",
                H - MARGIN - h,
                0.7 * slot,
                COLORS[i % COLORS.len()]
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\" font-size=\"9\">{}</text>",
            x + 0.35 * slot,
            H - MARGIN + 26.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}
