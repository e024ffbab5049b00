//! Minimal SVG writer: rectangles, lines and text.

use std::fmt::Write;

pub struct Svg {
    body: String,
    width: f64,
    height: f64,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self { body: String::new(), width, height }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#);
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="{width}"/>"#
        );
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="{size}" text-anchor="{anchor}">{}</text>"#,
            esc(s)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Grey level for a value in `[lo, hi]`, dark for high.
pub fn grey(v: f64, lo: f64, hi: f64) -> String {
    let t = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
    let g = (255.0 * (1.0 - t)).round() as u8;
    format!("#{g:02x}{g:02x}{g:02x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_and_wraps() {
        let mut s = Svg::new(10.0, 5.0);
        s.text(1.0, 2.0, 8.0, "start", "a<b & c");
        let out = s.finish();
        assert!(out.starts_with("<svg"));
        assert!(out.contains("a&lt;b &amp; c"));
        assert!(out.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn grey_endpoints() {
        assert_eq!(grey(0.0, 0.0, 1.0), "#ffffff");
        assert_eq!(grey(1.0, 0.0, 1.0), "#000000");
        assert_eq!(grey(3.0, 1.0, 1.0), "#808080");
    }
}
