//! Plain SVG plots. Output depends only on the input values, so reruns are
//! byte-identical.

use std::fmt::Write;

use membrane_mech::RegionLabel;

use crate::pipeline::CurveAnalysis;
use crate::trend::{sample_means, PropertyPoint, Response, TrendFit};

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#7f7f7f"];

fn group_color(group: &str, index: usize) -> &'static str {
    if group.starts_with("rh_ge") {
        PALETTE[0]
    } else if group.starts_with("rh_lt") {
        PALETTE[1]
    } else if group == "nitrogen" {
        PALETTE[2]
    } else {
        PALETTE[3 + index % 3]
    }
}

fn band_color(label: RegionLabel) -> &'static str {
    match label {
        RegionLabel::Elastic => "#c6dbef",
        RegionLabel::Plateau => "#fdd0a2",
        RegionLabel::Densification => "#c7e9c0",
        RegionLabel::Creep => "#dadaeb",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Linear map from data range to pixel range; degenerate ranges are widened.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    p0: f64,
    p1: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, p0: f64, p1: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        let pad = 0.05 * (hi - lo);
        Self {
            lo: lo - pad,
            hi: hi + pad,
            p0,
            p1,
        }
    }

    fn map(&self, v: f64) -> f64 {
        self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn frame(out: &mut String, x: Axis, y: Axis, title: &str, xlabel: &str, ylabel: &str) {
    let (left, right, top, bottom) = (x.p0, x.p1, y.p1, y.p0);
    let _ = writeln!(
        out,
        r##"<rect x="{left:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#333"/>"##,
        right - left,
        bottom - top
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{}</text>"#,
        (left + right) / 2.0,
        top - 8.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
        (left + right) / 2.0,
        bottom + 32.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
        left - 42.0,
        (top + bottom) / 2.0,
        left - 42.0,
        (top + bottom) / 2.0,
        escape(ylabel)
    );
    for (axis, horizontal) in [(x, true), (y, false)] {
        for i in 0..=4 {
            let v = axis.lo + (axis.hi - axis.lo) * i as f64 / 4.0;
            let p = axis.map(v);
            if horizontal {
                let _ = writeln!(
                    out,
                    r#"<text x="{p:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
                    bottom + 14.0,
                    tick(v)
                );
            } else {
                let _ = writeln!(
                    out,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{}</text>"#,
                    left - 4.0,
                    p + 3.0,
                    tick(v)
                );
            }
        }
    }
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a >= 100.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

/// Modulus and pore fraction against concentration, one colour per group,
/// per-sample means as points and the fitted trend lines.
pub fn overview_svg(points: &[PropertyPoint], fits: &[TrendFit]) -> String {
    let (w, h) = (900.0, 420.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let means = sample_means(points);
    let (xlo, xhi) = range(points.iter().map(|p| p.wt_pct));
    for (panel, response) in Response::ALL.into_iter().enumerate() {
        let value = |m: &(f64, f64, f64)| if response == Response::ElasticModulus { m.1 } else { m.2 };
        let (ylo, yhi) = range(means.values().flatten().map(value));
        let x0 = 80.0 + panel as f64 * 440.0;
        let x = Axis::new(xlo, xhi, x0, x0 + 340.0);
        let y = Axis::new(ylo, yhi, 360.0, 40.0);
        let (title, ylabel) = match response {
            Response::ElasticModulus => ("Elastic modulus", "modulus (bar)"),
            Response::PoreFraction => ("Pore fraction", "pore fraction"),
        };
        let _ = writeln!(out, r#"<g class="panel" data-response="{response}">"#);
        frame(&mut out, x, y, title, "polymer (wt%)", ylabel);
        for (gi, (group, ms)) in means.iter().enumerate() {
            let color = group_color(group, gi);
            for m in ms {
                let _ = writeln!(
                    out,
                    r#"<circle class="point" data-group="{}" cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                    escape(group),
                    x.map(m.0),
                    y.map(value(m))
                );
            }
            if let Some(f) = fits.iter().find(|f| &f.group == group && f.response == response) {
                let (a, b) = (xlo, xhi);
                let _ = writeln!(
                    out,
                    r#"<line class="trend" data-group="{}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="1.5"/>"#,
                    escape(group),
                    x.map(a),
                    y.map(f.slope * a + f.intercept),
                    x.map(b),
                    y.map(f.slope * b + f.intercept)
                );
            }
        }
        let _ = writeln!(out, "</g>");
    }
    for (gi, group) in means.keys().enumerate() {
        let ly = 20.0 + 16.0 * gi as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{}"/>"#,
            w - 150.0,
            ly - 9.0,
            group_color(group, gi)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{ly:.2}" font-size="11">{}</text>"#,
            w - 135.0,
            escape(group)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One panel per test position: the aligned curve over shaded region bands.
pub fn sample_svg(sample_id: &str, curves: &[&CurveAnalysis]) -> String {
    let (w, ph) = (640.0, 260.0);
    let h = 30.0 + ph * curves.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="15">{}</text>"#,
        w / 2.0,
        escape(sample_id)
    );
    for (i, a) in curves.iter().enumerate() {
        let top = 30.0 + ph * i as f64 + 30.0;
        let bottom = top + ph - 80.0;
        let pts = &a.aligned.points;
        let (xlo, xhi) = range(pts.iter().map(|p| p.strain));
        let (ylo, yhi) = range(pts.iter().map(|p| p.stress));
        let x = Axis::new(xlo, xhi, 80.0, w - 30.0);
        let y = Axis::new(ylo.min(0.0), yhi, bottom, top);
        let _ = writeln!(out, r#"<g class="curve" data-position="{}">"#, a.meta.position_index);
        for r in &a.segmentation.regions {
            let (l, rr) = (x.map(r.strain_range.0), x.map(r.strain_range.1));
            let _ = writeln!(
                out,
                r#"<rect class="band" data-region="{}" x="{l:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}" fill-opacity="0.6"/>"#,
                r.label,
                (rr - l).max(0.5),
                bottom - top,
                band_color(r.label)
            );
        }
        frame(
            &mut out,
            x,
            y,
            &format!("position {}", a.meta.position_index),
            "strain",
            "stress (bar)",
        );
        let stride = (pts.len() / 600).max(1);
        let mut path = String::new();
        for (j, p) in pts
            .iter()
            .enumerate()
            .filter(|(j, _)| j % stride == 0 || *j + 1 == pts.len())
        {
            let _ = write!(
                path,
                "{}{:.2},{:.2}",
                if j == 0 { "" } else { " " },
                x.map(p.strain),
                y.map(p.stress)
            );
        }
        let _ = writeln!(
            out,
            r##"<polyline points="{path}" fill="none" stroke="#222" stroke-width="1"/>"##
        );
        for r in a.segmentation.regions.iter().filter(|r| r.label != RegionLabel::Creep) {
            let (s0, s1) = r.strain_range;
            let _ = writeln!(
                out,
                r##"<line class="fit" data-region="{}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#d62728" stroke-dasharray="4 3"/>"##,
                r.label,
                x.map(s0),
                y.map(r.eval(s0)),
                x.map(s1),
                y.map(r.eval(s1))
            );
        }
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}

/// File-name-safe form of a sample id.
pub fn file_stem(sample_id: &str) -> String {
    sample_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
