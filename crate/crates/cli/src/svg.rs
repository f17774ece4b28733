//! Standalone SVG renders of the data files. Convenience only.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 480.0;
const M: f64 = 60.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in points.filter(|p| p.0.is_finite() && p.1.is_finite()) {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            return Self { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
        }
        let pad = |a: f64, b: f64| if b > a { 0.05 * (b - a) } else { 0.5 };
        let (px, py) = (pad(x0, x1), pad(y0, y1));
        Self { x0: x0 - px, x1: x1 + px, y0: y0 - py, y1: y1 + py }
    }

    fn sx(&self, x: f64) -> f64 {
        M + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * M)
    }

    fn sy(&self, y: f64) -> f64 {
        H - M - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * M)
    }
}

fn open(out: &mut String, f: &Frame, title: &str, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        out,
        r#"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * M,
        H - 2.0 * M
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let x = f.x0 + t * (f.x1 - f.x0);
        let y = f.y0 + t * (f.y1 - f.y0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{}" text-anchor="middle">{x:.4}</text>"#, f.sx(x), H - M + 16.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.4}</text>"#, M - 4.0, f.sy(y) + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{ylabel}</text>"#,
        H / 2.0,
        H / 2.0
    );
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Polylines, one per series.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Vec<(f64, f64)>]) -> String {
    let f = Frame::fit(series.iter().flatten().copied());
    let mut out = String::new();
    open(&mut out, &f, title, xlabel, ylabel);
    for (k, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", f.sx(x), f.sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            COLORS[k % COLORS.len()],
            pts.join(" ")
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Cell map of `values` (row-major in `y`), colored on a cyclic scale over `[-pi, pi]`.
pub fn phase_plot(title: &str, window: [f64; 4], nx: usize, ny: usize, values: &[Option<f64>]) -> String {
    let f = Frame { x0: window[0], x1: window[1], y0: window[2], y1: window[3] };
    let mut out = String::new();
    open(&mut out, &f, title, "x", "y");
    let stride = (nx.max(ny) / 120).max(1);
    let cw = (f.sx(window[1]) - f.sx(window[0])) / (nx - 1) as f64 * stride as f64;
    let ch = (f.sy(window[2]) - f.sy(window[3])) / (ny - 1) as f64 * stride as f64;
    for j in (0..ny).step_by(stride) {
        for i in (0..nx).step_by(stride) {
            let Some(v) = values[j * nx + i] else { continue };
            let hue = ((v + std::f64::consts::PI) / (2.0 * std::f64::consts::PI) * 360.0).rem_euclid(360.0);
            let x = window[0] + (window[1] - window[0]) * i as f64 / (nx - 1) as f64;
            let y = window[2] + (window[3] - window[2]) * j as f64 / (ny - 1) as f64;
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="hsl({hue:.0},70%,55%)"/>"#,
                f.sx(x) - 0.5 * cw,
                f.sy(y) - 0.5 * ch,
                cw,
                ch
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Arrows of direction `(vx, vy)`, lengths normalized to the largest sample.
pub fn quiver_plot(title: &str, window: [f64; 4], arrows: &[(f64, f64, f64, f64)]) -> String {
    let f = Frame { x0: window[0], x1: window[1], y0: window[2], y1: window[3] };
    let mut out = String::new();
    open(&mut out, &f, title, "x", "y");
    let n = (arrows.len() as f64).sqrt().max(1.0);
    let cell = (W - 2.0 * M) / n;
    let vmax = arrows.iter().map(|a| a.2.hypot(a.3)).filter(|v| v.is_finite()).fold(0.0, f64::max);
    if vmax > 0.0 {
        for &(x, y, vx, vy) in arrows {
            let len = vx.hypot(vy);
            if !len.is_finite() || len == 0.0 {
                continue;
            }
            // sqrt scaling keeps slow regions visible
            let s = 0.9 * cell * (len / vmax).sqrt() / len;
            let (x0, y0) = (f.sx(x), f.sy(y));
            let (x1, y1) = (x0 + s * vx, y0 - s * vy);
            let _ = writeln!(out, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}" stroke="black"/>"#);
            let _ = writeln!(out, r#"<circle cx="{x1:.2}" cy="{y1:.2}" r="1.2"/>"#);
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_is_closed_svg() {
        let s = line_plot("t", "x", "y", &[vec![(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN)]]);
        assert!(s.starts_with("<svg"));
        assert!(s.trim_end().ends_with("</svg>"));
        assert!(!s.contains("NaN"));
    }

    #[test]
    fn degenerate_data_still_renders() {
        let s = line_plot("t", "x", "y", &[vec![(1.0, 1.0)]]);
        assert!(s.contains("polyline"));
        let q = quiver_plot("q", [-1.0, 1.0, -1.0, 1.0], &[(0.0, 0.0, 0.0, 0.0)]);
        assert!(!q.contains("<line"));
    }
}
