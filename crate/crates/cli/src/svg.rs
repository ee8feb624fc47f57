//! Minimal SVG 1.1 plots.

use std::fmt::Write;

use dmri_uq::calibrate::PPCurve;

const W: f64 = 480.0;
const H: f64 = 480.0;
const M: f64 = 56.0;

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn header(out: &mut String, title: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Maps data coordinates in `[x0, x1] × [y0, y1]` onto the plot area.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        M + (v - self.x0) / (self.x1 - self.x0) * (W - 2.0 * M)
    }

    fn y(&self, v: f64) -> f64 {
        H - M - (v - self.y0) / (self.y1 - self.y0) * (H - 2.0 * M)
    }

    fn axes(&self, out: &mut String, xlabel: &str, ylabel: &str, ticks: usize) {
        let _ = writeln!(
            out,
            r#"<g stroke="black" stroke-width="1" fill="none"><rect x="{M}" y="{M}" width="{}" height="{}"/></g>"#,
            W - 2.0 * M,
            H - 2.0 * M
        );
        for k in 0..=ticks {
            let t = k as f64 / ticks as f64;
            let xv = self.x0 + t * (self.x1 - self.x0);
            let yv = self.y0 + t * (self.y1 - self.y0);
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
                self.x(xv),
                H - M + 16.0,
                tick(xv)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
                M - 6.0,
                self.y(yv) + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
            W / 2.0,
            H - 14.0,
            escape(xlabel)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(ylabel)
        );
    }

    fn polyline(&self, out: &mut String, xs: &[f64], ys: &[f64], color: &str, dash: bool) {
        let pts: Vec<String> = xs.iter().zip(ys).map(|(x, y)| format!("{:.2},{:.2}", self.x(*x), self.y(*y))).collect();
        let dash = if dash { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            pts.join(" ")
        );
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 0.01 && v.abs() < 1e4) {
        format!("{}", (v * 100.0).round() / 100.0)
    } else {
        format!("{v:.1e}")
    }
}

/// P-P plot: the diagonal, the binomial band of the first curve and every curve.
pub fn pp_plot(title: &str, curves: &[(&str, &PPCurve)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let f = Frame { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
    if let Some((_, c)) = curves.first() {
        let mut pts: Vec<String> =
            c.p_grid.iter().zip(&c.band_hi).map(|(p, v)| format!("{:.2},{:.2}", f.x(*p), f.y(*v))).collect();
        pts.extend(c.p_grid.iter().zip(&c.band_lo).rev().map(|(p, v)| format!("{:.2},{:.2}", f.x(*p), f.y(*v))));
        let _ =
            writeln!(out, r##"<polygon points="{}" fill="#cccccc" fill-opacity="0.6" stroke="none"/>"##, pts.join(" "));
    }
    f.polyline(&mut out, &[0.0, 1.0], &[0.0, 1.0], "black", true);
    for (i, (label, c)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        f.polyline(&mut out, &c.p_grid, &c.coverage, color, false);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            M + 10.0,
            M + 18.0 + 16.0 * i as f64,
            escape(label)
        );
    }
    f.axes(&mut out, "theoretical probability p", "observed coverage", 5);
    out.push_str("</svg>\n");
    out
}

/// Histogram with `bins` equal-width bins.
pub fn histogram(title: &str, xlabel: &str, values: &[f64], bins: usize) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let (lo, hi) = if values.is_empty() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    };
    let mut counts = vec![0usize; bins];
    for v in values {
        let k = (((v - lo) / (hi - lo)) * bins as f64).floor() as usize;
        counts[k.min(bins - 1)] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let f = Frame { x0: lo, x1: hi, y0: 0.0, y1: top };
    let width = (hi - lo) / bins as f64;
    for (k, c) in counts.iter().enumerate() {
        let x = lo + k as f64 * width;
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}" stroke="white" stroke-width="0.5"/>"#,
            f.x(x),
            f.y(*c as f64),
            f.x(x + width) - f.x(x),
            f.y(0.0) - f.y(*c as f64),
            COLORS[0]
        );
    }
    f.axes(&mut out, xlabel, "count", 4);
    out.push_str("</svg>\n");
    out
}
