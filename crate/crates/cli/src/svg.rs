//! Static SVG figures. Every plotted point carries its source values as
//! `data-*` attributes, written with the same formatting as the CSV it
//! accompanies, so the figure can be checked against the table.

use std::fmt::Write as _;

use proxforest::analysis::QuartileR2Report;
use proxforest::outlier::{fmt_measure, signed_log};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 50.0;
const OUTLIER_COLOR: &str = "#d62728";
const PALETTE: [&str; 8] = ["#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2"];

pub fn class_color(class: usize) -> &'static str {
    PALETTE[class % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;").replace('\'', "&apos;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

/// Maps `[lo, hi]` onto `[a, b]`; a degenerate range maps to the midpoint.
fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        (a + b) / 2.0
    }
}

pub struct ScatterPoint<'a> {
    pub record_id: usize,
    pub class: usize,
    pub label: &'a str,
    pub measure: f64,
    pub flag: bool,
}

/// Outlier measure per record, grouped by class along the x axis, on a
/// signed-log y axis. Infinite measures sit on the top edge.
pub fn outlier_scatter(points: &[ScatterPoint], classes: &[String], thresholds: &[f64]) -> String {
    let mut out = String::new();
    header(&mut out, "Outlier measure by class");
    let ys: Vec<f64> = points.iter().map(|p| p.measure).chain(thresholds.iter().copied()).filter(|v| v.is_finite()).map(signed_log).collect();
    let lo = ys.iter().copied().fold(0.0_f64, f64::min);
    let hi = ys.iter().copied().fold(0.0_f64, f64::max);
    let y_of = |m: f64| {
        if m == f64::INFINITY {
            MARGIN
        } else {
            scale(signed_log(m), lo, hi, HEIGHT - MARGIN, MARGIN)
        }
    };
    let gap = 10.0;
    let slots = points.len() as f64 + gap * classes.len().saturating_sub(1) as f64;
    let x_of = |slot: f64| scale(slot, 0.0, slots.max(1.0), MARGIN, WIDTH - MARGIN);

    let mut slot = 0.0;
    for (j, name) in classes.iter().enumerate() {
        let members: Vec<&ScatterPoint> = points.iter().filter(|p| p.class == j).collect();
        let start = slot;
        let _ = writeln!(out, r#"<g class="class" data-class="{}">"#, escape(name));
        for p in &members {
            let fill = if p.flag { OUTLIER_COLOR } else { class_color(j) };
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{fill}" data-record-id="{}" data-label="{}" data-o="{}" data-flag="{}"/>"#,
                x_of(slot),
                y_of(p.measure),
                p.record_id,
                escape(p.label),
                fmt_measure(p.measure),
                p.flag
            );
            slot += 1.0;
        }
        if let Some(&t) = thresholds.get(j).filter(|t| t.is_finite()) {
            let y = y_of(t);
            let _ = writeln!(
                out,
                r##"<line class="threshold" x1="{:.2}" x2="{:.2}" y1="{y:.2}" y2="{y:.2}" stroke="#444" stroke-dasharray="4 3" data-threshold="{}"/>"##,
                x_of(start),
                x_of(slot.max(start + 1.0)),
                fmt_measure(t)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            x_of((start + slot) / 2.0),
            HEIGHT - MARGIN / 2.0,
            escape(name)
        );
        out.push_str("</g>\n");
        slot += gap;
    }
    out.push_str("</svg>\n");
    out
}

pub struct EmbeddedPoint<'a> {
    pub record_id: usize,
    pub class: usize,
    pub label: &'a str,
    pub xy: [f64; 2],
    pub flag: bool,
}

/// 2-D embedding with equal axis scaling; outliers drawn in red.
pub fn embedding_scatter(points: &[EmbeddedPoint], title: &str) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for a in 0..2 {
            lo[a] = lo[a].min(p.xy[a]);
            hi[a] = hi[a].max(p.xy[a]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let side = (HEIGHT - 2.0 * MARGIN).min(WIDTH - 2.0 * MARGIN);
    let (x0, y0) = ((WIDTH - side) / 2.0, (HEIGHT - side) / 2.0);
    for p in points {
        let (cx, cy) = if span > 0.0 {
            (x0 + (p.xy[0] - lo[0]) / span * side, y0 + side - (p.xy[1] - lo[1]) / span * side)
        } else {
            (WIDTH / 2.0, HEIGHT / 2.0)
        };
        let fill = if p.flag { OUTLIER_COLOR } else { class_color(p.class) };
        let _ = writeln!(
            out,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{fill}" data-record-id="{}" data-label="{}" data-x="{}" data-y="{}" data-flag="{}"/>"#,
            p.record_id,
            escape(p.label),
            p.xy[0],
            p.xy[1],
            p.flag
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One panel per analysed class with a box per outlier-score quartile on an
/// R-squared axis from 0 to 1.
pub fn quartile_boxes(report: &QuartileR2Report) -> String {
    let mut out = String::new();
    header(&mut out, "R-squared against class benchmark by outlier quartile");
    let analysed: Vec<_> = report.classes.iter().filter(|c| !c.skipped).collect();
    let panel = (WIDTH - 2.0 * MARGIN) / analysed.len().max(1) as f64;
    let y_of = |r2: f64| scale(r2.clamp(0.0, 1.0), 0.0, 1.0, HEIGHT - MARGIN, MARGIN);
    for (k, class) in analysed.iter().enumerate() {
        let left = MARGIN + k as f64 * panel;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            left + panel / 2.0,
            HEIGHT - MARGIN / 2.0,
            escape(&class.name)
        );
        let slot = panel / 4.0;
        for q in &class.quartiles {
            let Some(b) = &q.r_squared else { continue };
            let cx = left + slot * (q.quartile as f64 - 0.5);
            let w = slot * 0.5;
            let _ = writeln!(
                out,
                r#"<g class="box" data-class="{}" data-quartile="{}" data-count="{}" data-q1="{}" data-median="{}" data-q3="{}">"#,
                escape(&class.name),
                q.quartile,
                q.count,
                b.q1,
                b.median,
                b.q3
            );
            let (top, bottom) = (y_of(b.q3), y_of(b.q1));
            let _ = writeln!(
                out,
                r#"<line x1="{cx:.2}" x2="{cx:.2}" y1="{:.2}" y2="{:.2}" stroke="black"/>"#,
                y_of(b.whisker_high),
                y_of(b.whisker_low)
            );
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{top:.2}" width="{w:.2}" height="{:.2}" fill="{}" stroke="black"/>"#,
                cx - w / 2.0,
                (bottom - top).max(0.5),
                class_color(class.class)
            );
            let ym = y_of(b.median);
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" x2="{:.2}" y1="{ym:.2}" y2="{ym:.2}" stroke="black" stroke-width="2"/>"#,
                cx - w / 2.0,
                cx + w / 2.0
            );
            for &o in &b.outliers {
                let _ = writeln!(out, r#"<circle cx="{cx:.2}" cy="{:.2}" r="2" fill="none" stroke="black"/>"#, y_of(o));
            }
            out.push_str("</g>\n");
        }
    }
    out.push_str("</svg>\n");
    out
}
