use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paradr::Point;

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 168.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 52.0;

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#b07aa1", "#76b7b2", "#edc948", "#9c755f", "#bab0ac",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlotKind {
    Scatter,
    Histogram,
    Line,
    Bar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkerRole {
    Benign,
    Adversarial,
    Aim,
    /// Reference location such as a cluster centroid.
    Centroid,
}

impl MarkerRole {
    fn legend(self) -> &'static str {
        match self {
            MarkerRole::Benign => "benign",
            MarkerRole::Adversarial => "adversarial",
            MarkerRole::Aim => "aim",
            MarkerRole::Centroid => "centroid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub point: Point,
    pub role: MarkerRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Binding {
    /// Scatter glyphs or line vertices.
    Points { name: String, points: Vec<Point> },
    /// Raw values binned into a histogram.
    Values { name: String, values: Vec<f64>, bins: usize },
    /// One bar per label.
    Bars { name: String, labels: Vec<String>, values: Vec<f64> },
}

impl Binding {
    fn name(&self) -> &str {
        match self {
            Binding::Points { name, .. } | Binding::Values { name, .. } | Binding::Bars { name, .. } => name,
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            Binding::Points { points, .. } => points.is_empty(),
            Binding::Values { values, bins, .. } => values.is_empty() || *bins == 0,
            Binding::Bars { values, .. } => values.is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvgPlot {
    pub kind: PlotKind,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub bindings: Vec<Binding>,
    #[serde(default)]
    pub markers: Vec<Marker>,
}

impl SvgPlot {
    pub fn new(kind: PlotKind, title: impl Into<String>) -> Self {
        Self {
            kind,
            title: title.into(),
            x_label: String::new(),
            y_label: String::new(),
            bindings: Vec::new(),
            markers: Vec::new(),
        }
    }

    pub fn labels(mut self, x: impl Into<String>, y: impl Into<String>) -> Self {
        self.x_label = x.into();
        self.y_label = y.into();
        self
    }

    pub fn bind(mut self, binding: Binding) -> Self {
        self.bindings.push(binding);
        self
    }

    pub fn mark(mut self, point: Point, role: MarkerRole) -> Self {
        self.markers.push(Marker { point, role });
        self
    }
}

/// Equal-width bin counts over `[lo, hi]`; the last bin is closed.
pub fn histogram(values: &[f64], bins: usize) -> (f64, f64, Vec<usize>) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = vec![0; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        let k = if width > 0.0 { ((v - lo) / width) as usize } else { 0 };
        counts[k.min(bins - 1)] += 1;
    }
    (lo, hi, counts)
}

#[derive(Debug, Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn empty() -> Self {
        Range {
            lo: f64::INFINITY,
            hi: f64::NEG_INFINITY,
        }
    }

    fn include(&mut self, v: f64) {
        if v.is_finite() {
            self.lo = self.lo.min(v);
            self.hi = self.hi.max(v);
        }
    }

    /// Padded by 5% on each side; a degenerate range is widened to ±0.5.
    fn padded(self) -> Self {
        if !self.lo.is_finite() {
            return Range { lo: 0.0, hi: 1.0 };
        }
        let span = self.hi - self.lo;
        if span <= 0.0 {
            return Range {
                lo: self.lo - 0.5,
                hi: self.hi + 0.5,
            };
        }
        Range {
            lo: self.lo - 0.05 * span,
            hi: self.hi + 0.05 * span,
        }
    }
}

struct Frame {
    x: Range,
    y: Range,
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        MARGIN_LEFT + (v - self.x.lo) / (self.x.hi - self.x.lo) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM - (v - self.y.lo) / (self.y.hi - self.y.lo) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn frame_for(plot: &SvgPlot) -> Frame {
    let mut x = Range::empty();
    let mut y = Range::empty();
    for b in &plot.bindings {
        match b {
            Binding::Points { points, .. } => {
                for p in points {
                    x.include(p[0]);
                    y.include(p[1]);
                }
            }
            Binding::Values { values, bins, .. } => {
                let (lo, hi, counts) = histogram(values, *bins);
                x.include(lo);
                x.include(hi);
                y.include(0.0);
                y.include(counts.iter().copied().max().unwrap_or(0) as f64);
            }
            Binding::Bars { values, .. } => {
                x.include(0.0);
                x.include(values.len() as f64);
                y.include(0.0);
                for &v in values {
                    y.include(v);
                }
            }
        }
    }
    for m in &plot.markers {
        x.include(m.point[0]);
        y.include(m.point[1]);
    }
    let x = match plot.kind {
        PlotKind::Bar | PlotKind::Histogram => {
            if x.lo.is_finite() && x.hi > x.lo {
                x
            } else {
                x.padded()
            }
        }
        _ => x.padded(),
    };
    let nonnegative = y.lo >= 0.0;
    let mut y = y.padded();
    if matches!(plot.kind, PlotKind::Bar | PlotKind::Histogram) && nonnegative {
        y.lo = 0.0;
    }
    Frame { x, y }
}

fn glyph(out: &mut String, role: Option<MarkerRole>, x: f64, y: f64, color: &str) {
    match role {
        None => {
            let _ = writeln!(out, r#"<circle class="pt" cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}" fill-opacity="0.75"/>"#);
        }
        Some(MarkerRole::Benign) => {
            let _ = writeln!(
                out,
                r##"<circle class="marker benign" cx="{x:.2}" cy="{y:.2}" r="6" fill="none" stroke="#2b2b2b" stroke-width="1.5"/>"##
            );
        }
        Some(MarkerRole::Adversarial) => {
            let d = 6.0;
            let _ = writeln!(
                out,
                r##"<path class="marker adversarial" d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}" stroke="#d62728" stroke-width="3"/>"##,
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
        Some(MarkerRole::Aim) => {
            let _ = writeln!(
                out,
                r##"<rect class="marker aim" x="{:.2}" y="{:.2}" width="10" height="10" fill="none" stroke="#17becf" stroke-width="2"/>"##,
                x - 5.0,
                y - 5.0
            );
        }
        Some(MarkerRole::Centroid) => {
            let d = 6.0;
            let _ = writeln!(
                out,
                r##"<path class="marker centroid" d="M{:.2},{:.2}L{:.2},{:.2}L{:.2},{:.2}L{:.2},{:.2}Z" fill="none" stroke="#6b6b6b" stroke-width="2"/>"##,
                x,
                y - d,
                x + d,
                y,
                x,
                y + d,
                x - d,
                y
            );
        }
    }
}

/// Standalone SVG document; identical input gives identical bytes.
pub fn render(plot: &SvgPlot) -> Result<String> {
    if plot.bindings.is_empty() || plot.bindings.iter().all(Binding::is_empty) {
        return Err(Error::EmptyBinding);
    }
    let f = frame_for(plot);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text class="title" x="{:.2}" y="22" font-size="14" text-anchor="middle">{}</text>"#,
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        escape(&plot.title)
    );

    // axes and ticks
    let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
    let _ = writeln!(s, r##"<g class="axes" stroke="#444">"##);
    let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/>"#);
    let _ = writeln!(s, "</g>");
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let yv = f.y.lo + t * (f.y.hi - f.y.lo);
        let py = f.py(yv);
        let _ = writeln!(
            s,
            r#"<text class="tick" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            py + 4.0,
            tick_label(yv)
        );
        if plot.kind != PlotKind::Bar {
            let xv = f.x.lo + t * (f.x.hi - f.x.lo);
            let _ = writeln!(
                s,
                r#"<text class="tick" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                f.px(xv),
                y0 + 16.0,
                tick_label(xv)
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text class="xlabel" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(&plot.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text class="ylabel" transform="translate(16,{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (y0 + y1) / 2.0,
        escape(&plot.y_label)
    );

    // data
    let mut legend: Vec<(String, String, Option<MarkerRole>)> = Vec::new();
    for (i, b) in plot.bindings.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        legend.push((b.name().to_string(), color.to_string(), None));
        let _ = writeln!(s, r#"<g class="series" data-name="{}">"#, escape(b.name()));
        match b {
            Binding::Points { points, .. } => {
                if plot.kind == PlotKind::Line {
                    let path: Vec<String> = points.iter().map(|p| format!("{:.2},{:.2}", f.px(p[0]), f.py(p[1]))).collect();
                    let _ = writeln!(
                        s,
                        r#"<polyline class="line" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                        path.join(" ")
                    );
                }
                for p in points {
                    glyph(&mut s, None, f.px(p[0]), f.py(p[1]), color);
                }
            }
            Binding::Values { values, bins, .. } => {
                let (lo, hi, counts) = histogram(values, *bins);
                let w = (hi - lo) / *bins as f64;
                for (k, &c) in counts.iter().enumerate() {
                    let (a, z) = if w > 0.0 {
                        (lo + k as f64 * w, lo + (k + 1) as f64 * w)
                    } else {
                        (lo - 0.5, lo + 0.5)
                    };
                    let top = f.py(c as f64);
                    let _ = writeln!(
                        s,
                        r#"<rect class="bin" data-count="{c}" x="{:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}" stroke="white"/>"#,
                        f.px(a),
                        (f.px(z) - f.px(a)).max(0.0),
                        (y0 - top).max(0.0)
                    );
                }
            }
            Binding::Bars { labels, values, .. } => {
                let base = f.py(0.0_f64.max(f.y.lo));
                for (k, &v) in values.iter().enumerate() {
                    let left = f.px(k as f64 + 0.1);
                    let right = f.px(k as f64 + 0.9);
                    let top = f.py(v);
                    let (yy, hh) = if top < base { (top, base - top) } else { (base, top - base) };
                    let _ = writeln!(
                        s,
                        r#"<rect class="bar" data-value="{}" x="{left:.2}" y="{yy:.2}" width="{:.2}" height="{hh:.2}" fill="{color}"/>"#,
                        tick_label(v),
                        right - left
                    );
                    if let Some(label) = labels.get(k) {
                        let _ = writeln!(
                            s,
                            r#"<text class="tick" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                            (left + right) / 2.0,
                            y0 + 16.0,
                            escape(label)
                        );
                    }
                }
            }
        }
        let _ = writeln!(s, "</g>");
    }
    let mut roles: Vec<MarkerRole> = Vec::new();
    for m in &plot.markers {
        glyph(&mut s, Some(m.role), f.px(m.point[0]), f.py(m.point[1]), "");
        if !roles.contains(&m.role) {
            roles.push(m.role);
        }
    }
    for r in roles {
        legend.push((r.legend().to_string(), String::new(), Some(r)));
    }

    // legend
    let lx = WIDTH - MARGIN_RIGHT + 16.0;
    let _ = writeln!(s, r#"<g class="legend">"#);
    for (k, (name, color, role)) in legend.iter().enumerate() {
        let ly = MARGIN_TOP + 8.0 + 18.0 * k as f64;
        match role {
            None => {
                let _ = writeln!(
                    s,
                    r#"<rect class="swatch" x="{:.2}" y="{:.2}" width="10" height="10" fill="{color}"/>"#,
                    lx + 1.0,
                    ly - 5.0
                );
            }
            Some(_) => glyph(&mut s, *role, lx + 6.0, ly, color),
        }
        let _ = writeln!(
            s,
            r#"<text class="legend-label" x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 18.0,
            ly + 4.0,
            escape(name)
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attr(line: &str, key: &str) -> f64 {
        let start = line.find(&format!(" {key}=\"")).unwrap() + key.len() + 3;
        let end = line[start..].find('"').unwrap() + start;
        line[start..end].parse().unwrap()
    }

    #[test]
    fn three_points_three_glyphs() {
        let plot = SvgPlot::new(PlotKind::Scatter, "pts").bind(Binding::Points {
            name: "data".into(),
            points: vec![[0.0, 0.0], [1.0, 2.0], [2.0, 4.0]],
        });
        let svg = render(&plot).unwrap();
        let glyphs: Vec<&str> = svg.lines().filter(|l| l.contains(r#"class="pt""#)).collect();
        assert_eq!(glyphs.len(), 3);
        // x range [0,2] padded to [-0.1, 2.1]; plot width 408 px
        let span = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        for (line, (x, y)) in glyphs.iter().zip([(0.0, 0.0), (1.0, 2.0), (2.0, 4.0)]) {
            let ex = MARGIN_LEFT + (x + 0.1) / 2.2 * span;
            let ey = HEIGHT - MARGIN_BOTTOM - (y + 0.2) / 4.4 * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM);
            assert!((attr(line, "cx") - ex).abs() < 0.01);
            assert!((attr(line, "cy") - ey).abs() < 0.01);
        }
    }

    #[test]
    fn histogram_counts() {
        assert_eq!(histogram(&[1.0, 1.0, 2.0], 2).2, vec![2, 1]);
        let plot = SvgPlot::new(PlotKind::Histogram, "h").bind(Binding::Values {
            name: "v".into(),
            values: vec![1.0, 1.0, 2.0],
            bins: 2,
        });
        let svg = render(&plot).unwrap();
        let bins: Vec<&str> = svg.lines().filter(|l| l.contains(r#"class="bin""#)).collect();
        assert_eq!(bins.len(), 2);
        assert!(bins[0].contains(r#"data-count="2""#));
        assert!(bins[1].contains(r#"data-count="1""#));
        assert!((attr(bins[0], "height") - 2.0 * attr(bins[1], "height")).abs() < 0.02);
    }

    #[test]
    fn adversarial_marker_has_own_glyph_and_legend() {
        let plot = SvgPlot::new(PlotKind::Scatter, "m")
            .bind(Binding::Points {
                name: "data".into(),
                points: vec![[0.0, 0.0], [1.0, 1.0]],
            })
            .mark([5.0, 5.0], MarkerRole::Adversarial);
        let svg = render(&plot).unwrap();
        assert_eq!(svg.matches(r#"class="marker adversarial""#).count(), 2);
        assert!(svg.contains(">adversarial</text>"));
        // marker lies inside the axis range
        assert!(svg.contains("<path class=\"marker adversarial\""));
    }

    #[test]
    fn empty_binding_rejected_and_output_deterministic() {
        let empty = SvgPlot::new(PlotKind::Bar, "e");
        assert!(matches!(render(&empty), Err(Error::EmptyBinding)));
        let plot = SvgPlot::new(PlotKind::Bar, "b").bind(Binding::Bars {
            name: "s".into(),
            labels: vec!["a".into(), "b".into()],
            values: vec![1.0, -2.0],
        });
        assert_eq!(render(&plot).unwrap(), render(&plot).unwrap());
    }
}
