use std::fmt::Write;

use lerg_core::eval::{AggregateCurve, MetricKind};
use lerg_core::{Example, ExplanationMatrix};

use super::{fmt_f64, Stamp};

const CELL: f64 = 36.0;
const PALETTE: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn metadata(stamp: &Stamp) -> String {
    format!(
        "<metadata><run-config>{}</run-config><input-sha256>{}</input-sha256></metadata>\n",
        escape(&stamp.config_json),
        stamp.input_sha256
    )
}

/// Blue for negative, red for positive, white at zero. `t` is in [-1, 1].
fn diverging(t: f64) -> String {
    let t = t.clamp(-1.0, 1.0);
    let fade = |c: f64| (255.0 - (255.0 - c) * t.abs()).round() as u8;
    let (r, g, b) = if t >= 0.0 {
        (fade(178.0), fade(24.0), fade(43.0))
    } else {
        (fade(33.0), fade(102.0), fade(172.0))
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heatmap of `Φ`: context segments along the horizontal axis, response
/// segments down the vertical axis.
pub fn heatmap_svg(stamp: &Stamp, example: &Example, explanation: &ExplanationMatrix) -> String {
    let m = explanation.context_len();
    let n = explanation.response_len();
    let label_w = 8.0 * example.response.segments().iter().map(|s| s.chars().count()).max().unwrap_or(1) as f64 + 16.0;
    let label_h = 7.0 * example.context.segments().iter().map(|s| s.chars().count()).max().unwrap_or(1) as f64 + 20.0;
    let (x0, y0) = (label_w, 40.0 + label_h);
    let width = x0 + CELL * m as f64 + 20.0;
    let height = y0 + CELL * n as f64 + 40.0;
    let scale = explanation.phi.max_abs();

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    s.push_str(&metadata(stamp));
    let _ = writeln!(
        s,
        "<text x=\"8\" y=\"18\" font-size=\"14\">{} for {}</text>",
        escape(explanation.method.name()),
        escape(&example.id)
    );
    let _ = writeln!(
        s,
        "<text x=\"8\" y=\"34\" font-size=\"10\" fill=\"#555\">display scaling only: colour = phi / {} (max |phi|)</text>",
        fmt_f64(scale)
    );
    for (i, seg) in example.context.segments().iter().enumerate() {
        let x = x0 + CELL * (i as f64 + 0.5);
        let _ = writeln!(
            s,
            "<text x=\"{x}\" y=\"{}\" transform=\"rotate(-60 {x} {})\">{}</text>",
            y0 - 6.0,
            y0 - 6.0,
            escape(seg)
        );
    }
    for (j, seg) in example.response.segments().iter().enumerate() {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            x0 - 6.0,
            y0 + CELL * (j as f64 + 0.5) + 4.0,
            escape(seg)
        );
    }
    for j in 0..n {
        for i in 0..m {
            let v = explanation.get(i, j);
            let t = if scale > 0.0 { v / scale } else { 0.0 };
            let _ = writeln!(
                s,
                "<rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{}\" stroke=\"#ddd\"><title>{} / {}: {}</title></rect>",
                x0 + CELL * i as f64,
                y0 + CELL * j as f64,
                diverging(t),
                escape(&example.context.segments()[i]),
                escape(&example.response.segments()[j]),
                fmt_f64(v)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Corpus curves for one metric against the ratio grid.
pub fn line_plot_svg(stamp: &Stamp, metric: MetricKind, curves: &[&AggregateCurve]) -> String {
    let (w, h) = (560.0, 360.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 50.0);
    let ratios: Vec<f64> = curves.iter().flat_map(|c| c.ratios.iter().copied()).collect();
    let values: Vec<f64> = curves.iter().flat_map(|c| c.token_mean.iter().copied()).collect();
    let (xmin, xmax) = bounds(&ratios);
    let (ymin, ymax) = bounds(&values);
    let px = |x: f64| left + (x - xmin) / (xmax - xmin) * (w - left - right);
    let py = |y: f64| h - bottom - (y - ymin) / (ymax - ymin) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    s.push_str(&metadata(stamp));
    let _ = writeln!(s, "<text x=\"{left}\" y=\"22\" font-size=\"14\">{} (token-weighted corpus mean)</text>", metric.name());
    let _ = writeln!(
        s,
        "<line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#000\"/>\n<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"#000\"/>",
        h - bottom,
        w - right,
        h - bottom,
        h - bottom
    );
    let mut ticks: Vec<f64> = ratios.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for r in ticks {
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", px(r), h - bottom + 16.0, fmt_f64(r));
    }
    for k in 0..=4 {
        let y = ymin + (ymax - ymin) * k as f64 / 4.0;
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.4}</text>", left - 6.0, py(y) + 4.0, y);
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">ratio</text>", (left + w - right) / 2.0, h - 12.0);
    for (c, curve) in curves.iter().enumerate() {
        let colour = PALETTE[c % PALETTE.len()];
        let points: Vec<String> = curve
            .ratios
            .iter()
            .zip(&curve.token_mean)
            .map(|(&x, &y)| format!("{},{}", px(x), py(y)))
            .collect();
        let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\" points=\"{}\"/>", points.join(" "));
        for (&x, &y) in curve.ratios.iter().zip(&curve.token_mean) {
            let _ = writeln!(
                s,
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{colour}\"><title>{}: {}</title></circle>",
                px(x),
                py(y),
                escape(&curve.label()),
                fmt_f64(y)
            );
        }
        let ly = top + 18.0 * c as f64;
        let _ = writeln!(
            s,
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{colour}\"/><text x=\"{}\" y=\"{}\">{}</text>",
            w - right + 12.0,
            ly,
            w - right + 30.0,
            ly + 10.0,
            escape(&curve.label())
        );
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().filter(|x| x.is_finite()).fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}
