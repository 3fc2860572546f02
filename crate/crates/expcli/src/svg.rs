//! Minimal SVG line plots: axes, a theory polyline, a shaded band and data
//! points with error bars. Coordinates are printed with fixed precision so
//! reruns are byte-identical.

use std::fmt::Write;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 45.0;

#[derive(Debug, Clone, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub theory: Vec<(f64, f64)>,
    /// `(x, lower, upper)`
    pub band: Vec<(f64, f64, f64)>,
    /// `(x, y, sigma)`
    pub points: Vec<(f64, f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

impl Plot {
    fn sx(&self, x: f64) -> f64 {
        let (lo, hi) = self.x_range;
        MARGIN_LEFT + (x - lo) / (hi - lo) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn sy(&self, y: f64) -> f64 {
        let (lo, hi) = self.y_range;
        HEIGHT - MARGIN_BOTTOM - (y - lo) / (hi - lo) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }

    /// Pick a y range covering theory, band and error bars with a small margin.
    pub fn fit_y_range(&mut self, floor: Option<f64>, ceil: Option<f64>) {
        let ys = self
            .theory
            .iter()
            .map(|p| (p.1, p.1))
            .chain(self.band.iter().map(|b| (b.1, b.2)))
            .chain(self.points.iter().map(|p| (p.1 - p.2, p.1 + p.2)));
        let (mut lo, mut hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (l, h)| {
            (a.min(l), b.max(h))
        });
        if !lo.is_finite() || !hi.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        let pad = ((hi - lo) * 0.08).max(1e-6);
        lo -= pad;
        hi += pad;
        if let Some(f) = floor {
            lo = lo.max(f);
        }
        if let Some(c) = ceil {
            hi = hi.min(c);
        }
        if hi <= lo {
            hi = lo + 1e-6;
        }
        self.y_range = (lo, hi);
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        s.push_str("<style>.axis{stroke:#000;stroke-width:1}.theory{fill:none;stroke:#1f4e9c;stroke-width:1.5}.band{fill:#1f4e9c;fill-opacity:0.2;stroke:none}.data{fill:#c0392b}.errorbar{stroke:#c0392b;stroke-width:1}text{font-family:sans-serif;font-size:12px}</style>\n");
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="18" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );

        let (x0, x1) = (self.sx(self.x_range.0), self.sx(self.x_range.1));
        let (y0, y1) = (self.sy(self.y_range.0), self.sy(self.y_range.1));
        let _ = writeln!(
            s,
            r#"<line class="axis" x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/>"#
        );
        let _ = writeln!(
            s,
            r#"<line class="axis" x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/>"#
        );
        for k in 0..=4 {
            let fx = self.x_range.0 + (self.x_range.1 - self.x_range.0) * k as f64 / 4.0;
            let fy = self.y_range.0 + (self.y_range.1 - self.y_range.0) * k as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{fx:.3}</text>"#,
                self.sx(fx),
                y0 + 16.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{fy:.4}</text>"#,
                x0 - 4.0,
                self.sy(fy) + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 8.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(&self.y_label)
        );

        if !self.band.is_empty() {
            let upper = self.band.iter().map(|b| (b.0, b.2));
            let lower = self.band.iter().rev().map(|b| (b.0, b.1));
            let pts: Vec<String> = upper
                .chain(lower)
                .map(|(x, y)| format!("{:.2},{:.2}", self.sx(x), self.sy(y)))
                .collect();
            let _ = writeln!(s, r#"<polygon class="band" points="{}"/>"#, pts.join(" "));
        }
        if !self.theory.is_empty() {
            let pts: Vec<String> = self
                .theory
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", self.sx(x), self.sy(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline class="theory" points="{}"/>"#,
                pts.join(" ")
            );
        }
        for &(x, y, e) in &self.points {
            let (px, py) = (self.sx(x), self.sy(y));
            if e > 0.0 {
                let _ = writeln!(
                    s,
                    r#"<line class="errorbar" x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}"/>"#,
                    self.sy(y - e),
                    self.sy(y + e)
                );
            }
            let _ = writeln!(
                s,
                r#"<circle class="data" cx="{px:.2}" cy="{py:.2}" r="3"/>"#
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// 4×4 heat-map panels for the real and imaginary parts of χ matrices.
pub fn chi_panels(title: &str, panels: &[(&str, [[f64; 4]; 4])]) -> String {
    const CELL: f64 = 36.0;
    const GAP: f64 = 30.0;
    let labels = ["I", "X", "Y", "Z"];
    let width = GAP + panels.len() as f64 * (4.0 * CELL + GAP);
    let height = 4.0 * CELL + 80.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    s.push_str("<style>text{font-family:sans-serif;font-size:11px}.cell{stroke:#fff}</style>\n");
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="16" text-anchor="middle">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    for (k, (name, m)) in panels.iter().enumerate() {
        let ox = GAP + k as f64 * (4.0 * CELL + GAP);
        let oy = 50.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            ox + 2.0 * CELL,
            oy - 18.0,
            escape(name)
        );
        for i in 0..4 {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                ox - 3.0,
                oy + (i as f64 + 0.6) * CELL,
                labels[i]
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                ox + (i as f64 + 0.5) * CELL,
                oy - 4.0,
                labels[i]
            );
            for (j, &value) in m[i].iter().enumerate() {
                let v = value.clamp(-0.5, 0.5);
                // blue for positive, red for negative, white at zero
                let t = (v.abs() * 2.0 * 255.0).round() as u8;
                let fill = if v >= 0.0 {
                    format!("rgb({},{},255)", 255 - t, 255 - t)
                } else {
                    format!("rgb(255,{},{})", 255 - t, 255 - t)
                };
                let _ = writeln!(
                    s,
                    r#"<rect class="cell" x="{:.2}" y="{:.2}" width="{CELL}" height="{CELL}" fill="{fill}"><title>{:.4}</title></rect>"#,
                    ox + j as f64 * CELL,
                    oy + i as f64 * CELL,
                    value
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}
