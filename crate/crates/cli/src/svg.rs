//! SVG scatter plot of 2-D node coordinates.

use std::fmt::Write;

use ipgdn::tensor::Matrix;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 540.0;
const MARGIN: f64 = 30.0;
const LEGEND_WIDTH: f64 = 130.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
const UNLABELED: &str = "#c8c8c8";

fn color(class: usize) -> String {
    if class < PALETTE.len() {
        PALETTE[class].to_string()
    } else {
        // Spread further classes around the hue circle.
        format!("hsl({}, 65%, 45%)", (class * 137) % 360)
    }
}

/// Renders one `circle` per row of `points` (an `n × 2` matrix), colored by
/// label. Each circle carries the raw coordinates in `data-x`/`data-y`.
pub fn scatter(points: &Matrix, labels: &[Option<usize>], num_classes: usize, title: &str) -> String {
    let n = points.rows();
    let xs: Vec<f64> = (0..n).map(|i| points.get(i, 0)).collect();
    let ys: Vec<f64> = (0..n).map(|i| points.get(i, 1)).collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, lo + 1.0)
        }
    };
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&ys);
    let plot_w = WIDTH - 2.0 * MARGIN - LEGEND_WIDTH;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * plot_h;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<g id="points">"#);
    for i in 0..n {
        let (fill, class) = match labels.get(i).copied().flatten() {
            Some(c) => (color(c), c.to_string()),
            None => (UNLABELED.to_string(), "unlabeled".to_string()),
        };
        let _ = writeln!(
            s,
            r#"<circle class="point" cx="{:.3}" cy="{:.3}" r="3" fill="{fill}" fill-opacity="0.8" data-node="{i}" data-class="{class}" data-x="{}" data-y="{}"/>"#,
            px(xs[i]),
            py(ys[i]),
            xs[i],
            ys[i]
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g id="legend" font-family="sans-serif" font-size="12">"#);
    let lx = WIDTH - LEGEND_WIDTH;
    let has_unlabeled = labels.iter().any(Option::is_none);
    let entries = (0..num_classes)
        .map(|c| (color(c), format!("class {c}")))
        .chain(has_unlabeled.then(|| (UNLABELED.to_string(), "unlabeled".to_string())));
    for (k, (fill, text)) in entries.enumerate() {
        let y = MARGIN + 18.0 * k as f64;
        let _ = writeln!(s, r#"<rect x="{lx}" y="{y}" width="10" height="10" fill="{fill}"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 16.0, y + 9.0, escape(&text));
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
