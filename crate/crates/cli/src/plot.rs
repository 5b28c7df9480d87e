//! Hand-written SVG of a staircase trace: the true-MI step function, the raw
//! estimate, and its trailing moving average. Non-finite estimates leave gaps.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use rpcmi::harness::{moving_average, TRACE_HEADER};

pub const SMOOTHING_WINDOW: usize = 50;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 45.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TracePoints {
    pub step: Vec<f64>,
    pub true_mi: Vec<f64>,
    pub estimate: Vec<f64>,
}

pub fn parse_trace(text: &str) -> Result<TracePoints> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == TRACE_HEADER => {}
        Some(h) => bail!("unexpected trace header '{h}', want '{TRACE_HEADER}'"),
        None => bail!("trace CSV is empty"),
    }
    let mut out = TracePoints {
        step: Vec::new(),
        true_mi: Vec::new(),
        estimate: Vec::new(),
    };
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            bail!("line {}: expected 5 fields, got {}", i + 2, fields.len());
        }
        let num = |k: usize| -> Result<f64> {
            fields[k]
                .trim()
                .parse::<f64>()
                .with_context(|| format!("line {}: bad number '{}'", i + 2, fields[k]))
        };
        let step = num(0)?;
        let true_mi = num(1)?;
        if !step.is_finite() || !true_mi.is_finite() {
            bail!("line {}: step and true_mi must be finite", i + 2);
        }
        out.step.push(step);
        out.true_mi.push(true_mi);
        out.estimate.push(num(3)?);
    }
    Ok(out)
}

/// CSV of the plotted series, including the moving-average column.
pub fn smoothed_csv(points: &TracePoints) -> String {
    let ma = moving_average(&points.estimate, SMOOTHING_WINDOW);
    let mut s = format!("step,true_mi,mi_estimate,mi_estimate_ma{SMOOTHING_WINDOW}\n");
    for (i, m) in ma.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            points.step[i],
            rpcmi::format_sig9(points.true_mi[i]),
            rpcmi::format_sig9(points.estimate[i]),
            rpcmi::format_sig9(*m)
        );
    }
    s
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

// One polyline per maximal run of finite values.
fn polylines(svg: &mut String, frame: &Frame, xs: &[f64], ys: &[f64], style: &str) {
    let mut run = String::new();
    let flush = |run: &mut String, svg: &mut String| {
        if !run.is_empty() {
            let _ = writeln!(svg, r#"<polyline fill="none" {style} points="{}"/>"#, run.trim_end());
            run.clear();
        }
    };
    for (&x, &y) in xs.iter().zip(ys) {
        if y.is_finite() {
            let _ = write!(run, "{:.2},{:.2} ", frame.px(x), frame.py(y));
        } else {
            flush(&mut run, svg);
        }
    }
    flush(&mut run, svg);
}

pub fn render_svg(points: &TracePoints, title: &str) -> String {
    let n = points.step.len();
    let (x0, x1) = if n == 0 {
        (0.0, 1.0)
    } else {
        let lo = points.step[0];
        let hi = points.step[n - 1];
        (lo, if hi > lo { hi } else { lo + 1.0 })
    };
    let top_mi = points.true_mi.iter().copied().fold(0.0, f64::max);
    let y1 = if top_mi > 0.0 { 1.25 * top_mi } else { 1.0 };
    let low_est = points
        .estimate
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0, f64::min);
    let y0 = low_est.max(-0.25 * y1);
    let frame = Frame { x0, x1, y0, y1 };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let _ = writeln!(
        svg,
        r#"<defs><clipPath id="plot"><rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/></clipPath></defs>"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{LEFT}" y="18">{}</text>"#, escape(title));

    for k in 0..=5 {
        let v = y0 + (y1 - y0) * k as f64 / 5.0;
        let y = frame.py(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"##,
            WIDTH - RIGHT,
            LEFT - 6.0,
            y + 4.0
        );
        let s = x0 + (x1 - x0) * k as f64 / 5.0;
        let x = frame.px(s);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{s:.0}</text>"#,
            HEIGHT - BOTTOM + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">step</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">MI (nats)</text>"#,
        TOP + ph / 2.0
    );

    let _ = writeln!(svg, r#"<g clip-path="url(#plot)">"#);
    let ma = moving_average(&points.estimate, SMOOTHING_WINDOW);
    let ma_gapped: Vec<f64> = ma
        .iter()
        .zip(&points.estimate)
        .map(|(&m, &e)| if e.is_finite() { m } else { f64::NAN })
        .collect();
    polylines(&mut svg, &frame, &points.step, &points.estimate, r##"stroke="#9ecae1" stroke-width="0.6""##);
    polylines(&mut svg, &frame, &points.step, &ma_gapped, r##"stroke="#08519c" stroke-width="1.2""##);
    // The true MI is drawn as a step function.
    let mut stair = Vec::with_capacity(2 * n);
    let mut stair_x = Vec::with_capacity(2 * n);
    for i in 0..n {
        if i > 0 && points.true_mi[i] != points.true_mi[i - 1] {
            stair_x.push(points.step[i]);
            stair.push(points.true_mi[i - 1]);
        }
        stair_x.push(points.step[i]);
        stair.push(points.true_mi[i]);
    }
    polylines(&mut svg, &frame, &stair_x, &stair, r#"stroke="black" stroke-width="1.5""#);
    let _ = writeln!(svg, "</g>");

    let legend = [
        ("black", "true MI"),
        ("#9ecae1", "estimate"),
        ("#08519c", "moving average (50)"),
    ];
    for (k, (colour, label)) in legend.iter().enumerate() {
        let x = WIDTH - RIGHT - 170.0;
        let y = TOP + 16.0 + 16.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{colour}" stroke-width="2"/><text x="{:.2}" y="{y:.2}">{label}</text>"#,
            y - 4.0,
            x + 20.0,
            y - 4.0,
            x + 26.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
