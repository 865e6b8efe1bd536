//! Minimal SVG renderings: a cell heatmap and a multi-series line plot.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| {
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        Self {
            x: widen(x),
            y: widen(y),
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (x0, x1) = (LEFT, W - RIGHT);
    let (y0, y1) = (H - BOTTOM, TOP);
    let _ = writeln!(
        out,
        r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = f.x.0 + t * (f.x.1 - f.x.0);
        let yv = f.y.0 + t * (f.y.1 - f.y.0);
        let (px, py) = (f.px(xv), f.py(yv));
        let _ = writeln!(
            out,
            r#"<line x1="{px:.1}" y1="{y0}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{x0}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 15.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e-2 && v.abs() < 1e4 {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Signed values on a regular grid; `values[iy * xs.len() + ix]`.
/// Positive cells are blue, negative red, missing grey; intensity follows
/// `sqrt(|v| / max|v|)`.
pub fn heatmap(xs: &[f64], ys: &[f64], values: &[Option<f64>], title: &str, xlabel: &str, ylabel: &str) -> String {
    assert_eq!(values.len(), xs.len() * ys.len());
    let step = |v: &[f64]| if v.len() > 1 { (v[1] - v[0]).abs() } else { 1.0 };
    let (dx, dy) = (step(xs), step(ys));
    let xr = extent(xs.iter().copied());
    let yr = extent(ys.iter().copied());
    let f = Frame::new((xr.0 - dx / 2.0, xr.1 + dx / 2.0), (yr.0 - dy / 2.0, yr.1 + dy / 2.0));
    let vmax = values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = String::new();
    header(&mut out, title);
    for (iy, &y) in ys.iter().enumerate() {
        for (ix, &x) in xs.iter().enumerate() {
            let fill = match values[iy * xs.len() + ix] {
                None => "#bbbbbb".to_string(),
                Some(v) => {
                    let t = if vmax > 0.0 { (v.abs() / vmax).sqrt() } else { 0.0 };
                    let fade = (255.0 * (1.0 - t)).round() as u8;
                    if v >= 0.0 {
                        format!("#{fade:02x}{fade:02x}ff")
                    } else {
                        format!("#ff{fade:02x}{fade:02x}")
                    }
                }
            };
            let (x0, x1) = (f.px(x - dx / 2.0), f.px(x + dx / 2.0));
            let (y0, y1) = (f.py(y + dy / 2.0), f.py(y - dy / 2.0));
            let _ = writeln!(
                out,
                r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                x1 - x0 + 0.3,
                y1 - y0 + 0.3
            );
        }
    }
    axes(&mut out, &f, xlabel, ylabel);
    out.push_str("</svg>\n");
    out
}

pub struct Series {
    pub label: String,
    /// `None` breaks the line.
    pub points: Vec<(f64, Option<f64>)>,
}

pub fn line_plot(series: &[Series], title: &str, xlabel: &str, ylabel: &str) -> String {
    let xr = extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let yr = extent(series.iter().flat_map(|s| s.points.iter().filter_map(|p| p.1)));
    let yr = if yr.0.is_finite() { (yr.0.min(0.0), yr.1.max(0.0)) } else { (0.0, 1.0) };
    let f = Frame::new(xr, yr);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, xlabel, ylabel);
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut segment: Vec<String> = Vec::new();
        let flush = |seg: &mut Vec<String>, out: &mut String| {
            if seg.len() > 1 {
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    seg.join(" ")
                );
            }
            seg.clear();
        };
        for &(x, y) in &s.points {
            match y {
                Some(y) => segment.push(format!("{:.2},{:.2}", f.px(x), f.py(y))),
                None => flush(&mut segment, &mut out),
            }
        }
        flush(&mut segment, &mut out);
        let ly = TOP + 16.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            W - RIGHT - 130.0,
            W - RIGHT - 110.0,
            W - RIGHT - 104.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}
