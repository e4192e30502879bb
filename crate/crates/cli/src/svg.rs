//! Minimal deterministic SVG plotting: line charts, bar histograms and
//! equal-aspect maps.

use std::fmt::Write;

pub const PALETTE: [&str; 8] =
    ["#1b6ca8", "#d1495b", "#2e933c", "#edae49", "#6a4c93", "#00798c", "#8c510a", "#444444"];

pub fn cluster_colour(cluster: usize) -> &'static str {
    PALETTE[(cluster.max(1) - 1) % PALETTE.len()]
}

const LEFT: f64 = 64.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 34.0;
const BOTTOM: f64 = 48.0;

/// Data-to-screen mapping.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    width: f64,
    height: f64,
    x: (f64, f64),
    y: (f64, f64),
    /// Image coordinates: y grows downwards.
    y_down: bool,
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

impl Frame {
    pub fn chart(x: (f64, f64), y: (f64, f64)) -> Self {
        Self { width: 760.0, height: 440.0, x: padded(x.0, x.1), y: padded(y.0, y.1), y_down: false }
    }

    /// Equal scale on both axes, 760 px wide plot area at most.
    pub fn map(x: (f64, f64), y: (f64, f64), y_down: bool) -> Self {
        let (x, y) = (padded(x.0, x.1), padded(y.0, y.1));
        let aspect = (y.1 - y.0) / (x.1 - x.0);
        let plot_w = if aspect > 1.0 { 680.0 / aspect } else { 680.0 };
        let plot_h = plot_w * aspect;
        Self { width: plot_w + LEFT + RIGHT, height: plot_h + TOP + BOTTOM, x, y, y_down }
    }

    fn plot_w(&self) -> f64 {
        self.width - LEFT - RIGHT
    }

    fn plot_h(&self) -> f64 {
        self.height - TOP - BOTTOM
    }

    pub fn sx(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * self.plot_w()
    }

    pub fn sy(&self, y: f64) -> f64 {
        let t = (y - self.y.0) / (self.y.1 - self.y.0);
        if self.y_down {
            TOP + t * self.plot_h()
        } else {
            TOP + (1.0 - t) * self.plot_h()
        }
    }
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    mag * if f < 1.5 { 1.0 } else if f < 3.5 { 2.0 } else if f < 7.5 { 5.0 } else { 10.0 }
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo);
    let k0 = (lo / step - 1e-9).ceil() as i64;
    let k1 = (hi / step + 1e-9).floor() as i64;
    (k0..=k1).map(|k| k as f64 * step).collect()
}

fn label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub struct Stroke<'a> {
    pub colour: &'a str,
    pub width: f64,
    pub dash: Option<&'a str>,
}

impl<'a> Stroke<'a> {
    pub const fn solid(colour: &'a str, width: f64) -> Self {
        Self { colour, width, dash: None }
    }

    pub const fn dashed(colour: &'a str, width: f64, dash: &'a str) -> Self {
        Self { colour, width, dash: Some(dash) }
    }

    fn attrs(&self) -> String {
        let mut s = format!(r#"fill="none" stroke="{}" stroke-width="{}""#, self.colour, self.width);
        if let Some(d) = self.dash {
            let _ = write!(s, r#" stroke-dasharray="{d}""#);
        }
        s
    }
}

pub struct Svg {
    frame: Frame,
    body: String,
}

impl Svg {
    pub fn new(frame: Frame, title: &str) -> Self {
        let mut body = String::new();
        let _ = writeln!(
            body,
            r#"<text x="{:.1}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
            frame.width / 2.0,
            escape(title)
        );
        Self { frame, body }
    }

    pub fn axes(&mut self, x_label: &str, y_label: &str) {
        let f = self.frame;
        let _ = writeln!(
            self.body,
            r#"<rect x="{LEFT}" y="{TOP}" width="{:.1}" height="{:.1}" fill="none" stroke="black" stroke-width="1"/>"#,
            f.plot_w(),
            f.plot_h()
        );
        let base = TOP + f.plot_h();
        for t in ticks(f.x.0, f.x.1) {
            let x = f.sx(t);
            let _ = writeln!(
                self.body,
                r#"<line x1="{x:.2}" y1="{base:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
                base + 5.0,
                base + 18.0,
                label(t)
            );
        }
        for t in ticks(f.y.0, f.y.1) {
            let y = f.sy(t);
            let _ = writeln!(
                self.body,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
                LEFT - 5.0,
                LEFT - 8.0,
                y + 4.0,
                label(t)
            );
        }
        let _ = writeln!(
            self.body,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            LEFT + f.plot_w() / 2.0,
            f.height - 10.0,
            escape(x_label)
        );
        let _ = writeln!(
            self.body,
            r#"<text transform="translate(16 {:.1}) rotate(-90)" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            TOP + f.plot_h() / 2.0,
            escape(y_label)
        );
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], stroke: &Stroke) {
        let pts: Vec<String> = points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", self.frame.sx(x), self.frame.sy(y)))
            .collect();
        let _ = writeln!(self.body, r#"<polyline points="{}" {}/>"#, pts.join(" "), stroke.attrs());
    }

    pub fn segment(&mut self, a: (f64, f64), b: (f64, f64), stroke: &Stroke) {
        let f = self.frame;
        let _ = writeln!(
            self.body,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" {}/>"#,
            f.sx(a.0),
            f.sy(a.1),
            f.sx(b.0),
            f.sy(b.1),
            stroke.attrs()
        );
    }

    /// Full-height vertical line at data coordinate `x`.
    pub fn vline(&mut self, x: f64, stroke: &Stroke) {
        let f = self.frame;
        let (lo, hi) = (f.y.0, f.y.1);
        self.segment((x, lo), (x, hi), stroke);
    }

    pub fn circle(&mut self, p: (f64, f64), r: f64, stroke: &str, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{r}" fill="{fill}" stroke="{stroke}"/>"#,
            self.frame.sx(p.0),
            self.frame.sy(p.1)
        );
    }

    pub fn triangle(&mut self, p: (f64, f64), size: f64, stroke: &str, fill: &str) {
        let (x, y) = (self.frame.sx(p.0), self.frame.sy(p.1));
        let h = size * 0.866;
        let _ = writeln!(
            self.body,
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{fill}" stroke="{stroke}"/>"#,
            x,
            y - h * 2.0 / 3.0,
            x - size / 2.0,
            y + h / 3.0,
            x + size / 2.0,
            y + h / 3.0
        );
    }

    pub fn cross(&mut self, p: (f64, f64), size: f64, colour: &str) {
        let (x, y) = (self.frame.sx(p.0), self.frame.sy(p.1));
        let d = size / 2.0;
        let _ = writeln!(
            self.body,
            r#"<path d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}" stroke="{colour}" fill="none"/>"#,
            x - d,
            y - d,
            x + d,
            y + d,
            x - d,
            y + d,
            x + d,
            y - d
        );
    }

    /// Bar from `y = 0` to `height` spanning `[x0, x1]`.
    pub fn bar(&mut self, x0: f64, x1: f64, height: f64, fill: &str) {
        let f = self.frame;
        let (top, base) = (f.sy(height), f.sy(0.0));
        let _ = writeln!(
            self.body,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}" stroke="black" stroke-width="0.5"/>"#,
            f.sx(x0),
            top.min(base),
            f.sx(x1) - f.sx(x0),
            (base - top).abs()
        );
    }

    /// Legend line at a fixed screen slot in the top-right corner.
    pub fn legend(&mut self, slot: usize, text: &str, stroke: &Stroke) {
        let x = self.frame.width - RIGHT - 200.0;
        let y = TOP + 16.0 + 16.0 * slot as f64;
        let _ = writeln!(
            self.body,
            r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" {}/><text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
            x + 24.0,
            stroke.attrs(),
            x + 30.0,
            y + 4.0,
            escape(text)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.0} {:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.frame.width, self.frame.height, self.frame.width, self.frame.height, self.body
        )
    }
}

/// Bounding box of points, or the unit square when empty.
pub fn bounds(points: impl IntoIterator<Item = (f64, f64)>) -> ((f64, f64), (f64, f64)) {
    let mut b = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
    for (x, y) in points {
        b.0 .0 = b.0 .0.min(x);
        b.0 .1 = b.0 .1.max(x);
        b.1 .0 = b.1 .0.min(y);
        b.1 .1 = b.1 .1.max(y);
    }
    if !b.0 .0.is_finite() {
        return ((0.0, 1.0), (0.0, 1.0));
    }
    b
}

/// Widen a range by `frac` of its span on each side.
pub fn pad(r: (f64, f64), frac: f64) -> (f64, f64) {
    let span = (r.1 - r.0).max(1e-9);
    (r.0 - frac * span, r.1 + frac * span)
}
