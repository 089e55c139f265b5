//! Minimal deterministic SVG line plots: axes, ticks, polylines, legend, and
//! an optional horizontal threshold line. No external renderer.

use std::fmt::Write;

pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
    pub dashed: bool,
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub threshold: Option<f64>,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            log_x: false,
            log_y: false,
            threshold: None,
        }
    }
}

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 180.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 60.0;

fn transform(v: f64, log: bool) -> f64 {
    if log {
        v.max(1e-300).log10()
    } else {
        v
    }
}

pub fn render(plot: &Plot, series: &[Series]) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            xs.push(transform(x, plot.log_x));
            ys.push(transform(y, plot.log_y));
        }
    }
    if let Some(t) = plot.threshold {
        ys.push(transform(t, plot.log_y));
    }
    let (x_min, x_max) = padded_range(&xs);
    let (y_min, y_max) = padded_range(&ys);

    let px = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * (WIDTH - MARGIN_L - MARGIN_R);
    let py =
        |y: f64| HEIGHT - MARGIN_B - (y - y_min) / (y_max - y_min) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    svg.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = write!(
        svg,
        r#"<text x="{:.1}" y="28" font-size="17" text-anchor="middle" font-family="sans-serif">{}</text>"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        escape(&plot.title)
    );

    // Axes.
    let _ = write!(
        svg,
        r#"<line x1="{l:.1}" y1="{b:.1}" x2="{r:.1}" y2="{b:.1}" stroke="black"/><line x1="{l:.1}" y1="{t:.1}" x2="{l:.1}" y2="{b:.1}" stroke="black"/>"#,
        l = MARGIN_L,
        r = WIDTH - MARGIN_R,
        t = MARGIN_T,
        b = HEIGHT - MARGIN_B
    );

    // Ticks and labels.
    for k in 0..=5 {
        let fx = x_min + (x_max - x_min) * k as f64 / 5.0;
        let x = px(fx);
        let label = tick_label(fx, plot.log_x);
        let _ = write!(
            svg,
            r#"<line x1="{x:.1}" y1="{b:.1}" x2="{x:.1}" y2="{b2:.1}" stroke="black"/><text x="{x:.1}" y="{ty:.1}" font-size="12" text-anchor="middle" font-family="sans-serif">{label}</text>"#,
            b = HEIGHT - MARGIN_B,
            b2 = HEIGHT - MARGIN_B + 6.0,
            ty = HEIGHT - MARGIN_B + 20.0
        );
        let fy = y_min + (y_max - y_min) * k as f64 / 5.0;
        let y = py(fy);
        let label = tick_label(fy, plot.log_y);
        let _ = write!(
            svg,
            r#"<line x1="{l2:.1}" y1="{y:.1}" x2="{l:.1}" y2="{y:.1}" stroke="black"/><text x="{tx:.1}" y="{ty:.1}" font-size="12" text-anchor="end" font-family="sans-serif">{label}</text>"#,
            l = MARGIN_L,
            l2 = MARGIN_L - 6.0,
            tx = MARGIN_L - 10.0,
            ty = y + 4.0
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="14" text-anchor="middle" font-family="sans-serif">{}</text>"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 14.0,
        escape(&plot.x_label)
    );
    let _ = write!(
        svg,
        r#"<text x="20" y="{:.1}" font-size="14" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 20 {:.1})">{}</text>"#,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        escape(&plot.y_label)
    );

    if let Some(t) = plot.threshold {
        let y = py(transform(t, plot.log_y));
        let _ = write!(
            svg,
            r#"<line x1="{l:.1}" y1="{y:.1}" x2="{r:.1}" y2="{y:.1}" stroke="gray" stroke-dasharray="2,4"/>"#,
            l = MARGIN_L,
            r = WIDTH - MARGIN_R
        );
    }

    // Data polylines.
    for s in series {
        if s.points.is_empty() {
            continue;
        }
        let mut path = String::new();
        for &(x, y) in &s.points {
            let _ = write!(
                path,
                "{:.2},{:.2} ",
                px(transform(x, plot.log_x)),
                py(transform(y, plot.log_y))
            );
        }
        let dash = if s.dashed {
            r#" stroke-dasharray="6,4""#
        } else {
            ""
        };
        let _ = write!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#,
            path.trim_end(),
            s.color
        );
    }

    // Legend.
    for (i, s) in series.iter().enumerate() {
        let y = MARGIN_T + 16.0 + 20.0 * i as f64;
        let x = WIDTH - MARGIN_R + 14.0;
        let dash = if s.dashed {
            r#" stroke-dasharray="6,4""#
        } else {
            ""
        };
        let _ = write!(
            svg,
            r#"<line x1="{x:.1}" y1="{y:.1}" x2="{x2:.1}" y2="{y:.1}" stroke="{}" stroke-width="1.5"{dash}/><text x="{tx:.1}" y="{ty:.1}" font-size="12" font-family="sans-serif">{}</text>"#,
            s.color,
            escape(&s.label),
            x2 = x + 26.0,
            tx = x + 32.0,
            ty = y + 4.0
        );
    }

    svg.push_str("</svg>\n");
    svg
}

fn padded_range(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick_label(v: f64, log: bool) -> String {
    let value = if log { 10f64.powf(v) } else { v };
    if value != 0.0 && (value.abs() >= 1e4 || value.abs() < 1e-3) {
        format!("{value:.2e}")
    } else {
        format!("{value:.4}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
