//! Minimal SVG figures built from plain strings: head heatmaps, per-head
//! boxplots, line curves and labelled scatter plots.
//!
//! Output is deterministic; every number is written with fixed precision.

use std::fmt::Write;

use crate::metrics::Summary;

const FONT: &str = "font-family=\"sans-serif\" font-size=\"11\"";
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub fn palette(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Canvas {
    body: String,
    width: f64,
    height: f64,
}

impl Canvas {
    fn new(width: f64, height: f64, title: &str) -> Self {
        let mut c = Self {
            body: String::new(),
            width,
            height,
        };
        c.text(width / 2.0, 18.0, "middle", title);
        c
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, text: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\" {FONT}>{}</text>",
            escape(text)
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: &str) {
        let _ = writeln!(
            self.body,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\" stroke=\"{stroke}\"/>"
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\"/>"
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{r:.2}\" fill=\"{fill}\"/>"
        );
    }

    fn polyline(&mut self, points: &[(f64, f64)], stroke: &str) {
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"/>",
            pts.join(" ")
        );
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Plot area with linear axes.
struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = (self.x.1 - self.x.0).max(f64::EPSILON);
        self.left + (x - self.x.0) / span * self.width
    }

    fn py(&self, y: f64) -> f64 {
        let span = (self.y.1 - self.y.0).max(f64::EPSILON);
        self.top + self.height - (y - self.y.0) / span * self.height
    }

    fn draw_axes(&self, c: &mut Canvas, x_label: &str, y_label: &str) {
        let bottom = self.top + self.height;
        c.line(self.left, bottom, self.left + self.width, bottom, "black");
        c.line(self.left, self.top, self.left, bottom, "black");
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let yv = self.y.0 + t * (self.y.1 - self.y.0);
            let y = self.py(yv);
            c.line(self.left - 4.0, y, self.left, y, "black");
            c.text(self.left - 6.0, y + 4.0, "end", &format!("{yv:.2}"));
            let xv = self.x.0 + t * (self.x.1 - self.x.0);
            let x = self.px(xv);
            c.line(x, bottom, x, bottom + 4.0, "black");
            c.text(x, bottom + 16.0, "middle", &format!("{xv:.2}"));
        }
        c.text(self.left + self.width / 2.0, bottom + 32.0, "middle", x_label);
        c.text(14.0, self.top + self.height / 2.0, "start", y_label);
    }
}

/// White-to-blue ramp over `[0, 1]`.
pub fn ramp(value: f64) -> String {
    let t = value.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0))
}

/// Layer × head grid of scores in `[0, 1]`, layer 0 at the top. With
/// `sort_heads` each row is shown in decreasing order, so columns no longer
/// identify heads.
pub fn heatmap(title: &str, values: &[f64], n_layers: usize, n_heads: usize, sort_heads: bool) -> String {
    let cell = 36.0;
    let (left, top) = (60.0, 36.0);
    let mut c = Canvas::new(left + cell * n_heads as f64 + 90.0, top + cell * n_layers as f64 + 40.0, title);
    for l in 0..n_layers {
        let mut row = values[l * n_heads..(l + 1) * n_heads].to_vec();
        if sort_heads {
            row.sort_by(|a, b| b.total_cmp(a));
        }
        let y = top + l as f64 * cell;
        c.text(left - 6.0, y + cell / 2.0 + 4.0, "end", &format!("L{l}"));
        for (h, v) in row.iter().enumerate() {
            let x = left + h as f64 * cell;
            c.rect(x, y, cell, cell, &ramp(*v), "white");
            let ink = if *v > 0.55 { "white" } else { "black" };
            let _ = writeln!(
                c.body,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"9\" fill=\"{ink}\">{v:.2}</text>",
                x + cell / 2.0,
                y + cell / 2.0 + 3.0
            );
        }
    }
    let bottom = top + cell * n_layers as f64;
    let axis = if sort_heads { "heads (sorted per layer)" } else { "head" };
    c.text(left + cell * n_heads as f64 / 2.0, bottom + 20.0, "middle", axis);
    // Colour bar.
    let bar_x = left + cell * n_heads as f64 + 20.0;
    for i in 0..20 {
        let v = 1.0 - i as f64 / 19.0;
        let h = (bottom - top) / 20.0;
        c.rect(bar_x, top + i as f64 * h, 14.0, h, &ramp(v), "none");
    }
    c.text(bar_x + 18.0, top + 8.0, "start", "1");
    c.text(bar_x + 18.0, bottom, "start", "0");
    c.finish()
}

/// One box per entry: whiskers at min/max, box from q1 to q3, median line.
pub fn boxplot(title: &str, y_label: &str, labels: &[String], stats: &[Summary], colors: &[&str]) -> String {
    let slot = 40.0;
    let frame = Frame {
        left: 70.0,
        top: 36.0,
        width: slot * stats.len().max(1) as f64,
        height: 220.0,
        x: (0.0, 1.0),
        y: (
            stats.iter().map(|s| s.min).fold(f64::INFINITY, f64::min).min(0.0),
            stats.iter().map(|s| s.max).fold(f64::NEG_INFINITY, f64::max).max(1e-9),
        ),
    };
    let mut c = Canvas::new(frame.left + frame.width + 20.0, frame.top + frame.height + 60.0, title);
    let bottom = frame.top + frame.height;
    c.line(frame.left, bottom, frame.left + frame.width, bottom, "black");
    c.line(frame.left, frame.top, frame.left, bottom, "black");
    for i in 0..=4 {
        let yv = frame.y.0 + i as f64 / 4.0 * (frame.y.1 - frame.y.0);
        let y = frame.py(yv);
        c.line(frame.left - 4.0, y, frame.left, y, "black");
        c.text(frame.left - 6.0, y + 4.0, "end", &format!("{yv:.2}"));
    }
    c.text(14.0, frame.top + frame.height / 2.0, "start", y_label);
    for (i, s) in stats.iter().enumerate() {
        let cx = frame.left + (i as f64 + 0.5) * slot;
        let half = slot * 0.3;
        let color = colors.get(i).copied().unwrap_or(PALETTE[0]);
        c.line(cx, frame.py(s.min), cx, frame.py(s.q1), "black");
        c.line(cx, frame.py(s.q3), cx, frame.py(s.max), "black");
        c.line(cx - half / 2.0, frame.py(s.min), cx + half / 2.0, frame.py(s.min), "black");
        c.line(cx - half / 2.0, frame.py(s.max), cx + half / 2.0, frame.py(s.max), "black");
        let top = frame.py(s.q3);
        c.rect(cx - half, top, 2.0 * half, (frame.py(s.q1) - top).max(0.5), color, "black");
        c.line(cx - half, frame.py(s.median), cx + half, frame.py(s.median), "black");
        if let Some(label) = labels.get(i) {
            c.text(cx, bottom + 16.0, "middle", label);
        }
    }
    c.finish()
}

/// A named polyline.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Line chart with a legend; the y-axis spans `[0, 1]`.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (x_lo, x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (x_lo, x_hi) = if x_lo.is_finite() { (x_lo, x_hi) } else { (0.0, 1.0) };
    let frame = Frame {
        left: 70.0,
        top: 36.0,
        width: 320.0,
        height: 220.0,
        x: (x_lo, if x_hi > x_lo { x_hi } else { x_lo + 1.0 }),
        y: (0.0, 1.0),
    };
    let mut c = Canvas::new(frame.left + frame.width + 170.0, frame.top + frame.height + 60.0, title);
    frame.draw_axes(&mut c, x_label, y_label);
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = s.points.iter().map(|&(x, y)| (frame.px(x), frame.py(y))).collect();
        c.polyline(&pts, palette(i));
        for &(x, y) in &pts {
            c.circle(x, y, 2.5, palette(i));
        }
        let ly = frame.top + 14.0 * i as f64;
        let lx = frame.left + frame.width + 16.0;
        c.rect(lx, ly, 10.0, 10.0, palette(i), "none");
        c.text(lx + 14.0, ly + 9.0, "start", &s.name);
    }
    c.finish()
}

/// 2-D points coloured by integer label, with a legend of `label_names`.
pub fn scatter(title: &str, points: &[(f64, f64, usize)], label_names: &[String]) -> String {
    let bounds = points.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(x, y, _)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    let pad = |lo: f64, hi: f64| {
        if !lo.is_finite() {
            (0.0, 1.0)
        } else {
            let m = ((hi - lo) * 0.05).max(1e-9);
            (lo - m, hi + m)
        }
    };
    let frame = Frame {
        left: 70.0,
        top: 36.0,
        width: 300.0,
        height: 300.0,
        x: pad(bounds.0, bounds.1),
        y: pad(bounds.2, bounds.3),
    };
    let mut c = Canvas::new(frame.left + frame.width + 150.0, frame.top + frame.height + 60.0, title);
    frame.draw_axes(&mut c, "t-SNE 1", "t-SNE 2");
    for &(x, y, label) in points {
        c.circle(frame.px(x), frame.py(y), 3.0, palette(label));
    }
    for (i, name) in label_names.iter().enumerate() {
        let ly = frame.top + 14.0 * i as f64;
        let lx = frame.left + frame.width + 16.0;
        c.circle(lx + 5.0, ly + 5.0, 4.0, palette(i));
        c.text(lx + 14.0, ly + 9.0, "start", name);
    }
    c.finish()
}
