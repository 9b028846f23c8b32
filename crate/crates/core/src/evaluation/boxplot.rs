use std::fmt::Write as _;

use super::summary::ScoreSummary;

const LEFT: f64 = 70.0;
const SLOT: f64 = 120.0;
const BOX_HALF: f64 = 30.0;
const CAP_HALF: f64 = 15.0;
const TOP: f64 = 30.0;
const PLOT_HEIGHT: f64 = 280.0;
const HEIGHT: f64 = 360.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One box per pipeline on a shared f1 axis. Output depends only on the input.
pub fn render_boxplot(summaries: &[(String, ScoreSummary)]) -> String {
    let lo = summaries.iter().map(|(_, s)| s.min).fold(f64::INFINITY, f64::min);
    let hi = summaries.iter().map(|(_, s)| s.max).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if summaries.is_empty() {
        (0.0, 1.0)
    } else if hi - lo < 1e-9 {
        (lo - 0.05, hi + 0.05)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    };
    let y = |v: f64| TOP + PLOT_HEIGHT * (hi - v) / (hi - lo);
    let width = LEFT + SLOT * summaries.len().max(1) as f64 + 20.0;
    let bottom = TOP + PLOT_HEIGHT;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{HEIGHT:.0}" viewBox="0 0 {width:.0} {HEIGHT:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r##"<rect x="0" y="0" width="{width:.0}" height="{HEIGHT:.0}" fill="#ffffff"/>"##);
    let _ = writeln!(svg, r##"<line class="axis" x1="{LEFT:.2}" y1="{TOP:.2}" x2="{LEFT:.2}" y2="{bottom:.2}" stroke="#000000"/>"##);
    for i in 0..=4 {
        let v = lo + (hi - lo) * f64::from(i) / 4.0;
        let ty = y(v);
        let _ = writeln!(
            svg,
            r##"<line class="tick" x1="{:.2}" y1="{ty:.2}" x2="{LEFT:.2}" y2="{ty:.2}" stroke="#000000"/>"##,
            LEFT - 5.0
        );
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#, LEFT - 8.0, ty + 4.0);
    }
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{:.2}" transform="rotate(-90 15 {:.2})" text-anchor="middle">f1</text>"#,
        TOP + PLOT_HEIGHT / 2.0,
        TOP + PLOT_HEIGHT / 2.0
    );
    for (i, (name, s)) in summaries.iter().enumerate() {
        let cx = LEFT + SLOT * (i as f64 + 0.5);
        let _ = writeln!(svg, r#"<g class="pipeline">"#);
        if s.whisker_high > s.q3 {
            let _ = writeln!(
                svg,
                r##"<line class="whisker" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="#000000"/>"##,
                y(s.q3),
                y(s.whisker_high)
            );
            let _ = writeln!(
                svg,
                r##"<line class="cap" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#000000"/>"##,
                cx - CAP_HALF,
                y(s.whisker_high),
                cx + CAP_HALF,
                y(s.whisker_high)
            );
        }
        if s.whisker_low < s.q1 {
            let _ = writeln!(
                svg,
                r##"<line class="whisker" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="#000000"/>"##,
                y(s.q1),
                y(s.whisker_low)
            );
            let _ = writeln!(
                svg,
                r##"<line class="cap" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#000000"/>"##,
                cx - CAP_HALF,
                y(s.whisker_low),
                cx + CAP_HALF,
                y(s.whisker_low)
            );
        }
        let _ = writeln!(
            svg,
            r##"<rect class="box" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="#000000"/>"##,
            cx - BOX_HALF,
            y(s.q3),
            2.0 * BOX_HALF,
            y(s.q1) - y(s.q3)
        );
        let _ = writeln!(
            svg,
            r##"<line class="median" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#d62728" stroke-width="2"/>"##,
            cx - BOX_HALF,
            y(s.median),
            cx + BOX_HALF,
            y(s.median)
        );
        for &o in &s.outliers {
            let _ = writeln!(
                svg,
                r##"<circle class="outlier" cx="{cx:.2}" cy="{:.2}" r="3" fill="none" stroke="#000000"/>"##,
                y(o)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            bottom + 20.0,
            escape(name)
        );
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    svg
}
