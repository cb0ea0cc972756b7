//! Static log-log scatter plots.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 70.0;

/// Six significant digits, the precision of every number printed in a plot.
pub fn sig6(x: f64) -> String {
    format!("{x:.5e}")
}

pub struct LogLogPlot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub points: &'a [(f64, f64)],
    /// Slope of a reference line drawn through the centroid of the points (in log space).
    pub reference_slope: Option<f64>,
}

impl LogLogPlot<'_> {
    pub fn render(&self) -> String {
        let logs: Vec<(f64, f64)> = self.points.iter().map(|&(x, y)| (x.log10(), y.log10())).collect();
        let (mut x0, mut x1) = bounds(logs.iter().map(|p| p.0));
        let (mut y0, mut y1) = bounds(logs.iter().map(|p| p.1));
        pad(&mut x0, &mut x1);
        pad(&mut y0, &mut y1);
        let sx = |lx: f64| MARGIN + (lx - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let sy = |ly: f64| HEIGHT - MARGIN - (ly - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

        let mut s = String::new();
        writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        )
        .unwrap();
        writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
        writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(self.title)).unwrap();

        let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        writeln!(s, r#"<path d="M{left} {top} V{bottom} H{right}" fill="none" stroke="black"/>"#).unwrap();
        for (i, lx) in ticks(x0, x1).into_iter().enumerate() {
            let px = sx(lx);
            writeln!(s, r#"<line x1="{px:.2}" y1="{bottom}" x2="{px:.2}" y2="{}" stroke="black"/>"#, bottom + 5.0).unwrap();
            writeln!(
                s,
                r#"<text class="xtick" x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
                bottom + 18.0 + 11.0 * (i % 2) as f64,
                sig6(10f64.powf(lx))
            )
            .unwrap();
        }
        for ly in ticks(y0, y1) {
            let py = sy(ly);
            writeln!(s, r#"<line x1="{}" y1="{py:.2}" x2="{left}" y2="{py:.2}" stroke="black"/>"#, left - 5.0).unwrap();
            writeln!(
                s,
                r#"<text class="ytick" x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                left - 8.0,
                py + 4.0,
                sig6(10f64.powf(ly))
            )
            .unwrap();
        }
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 12.0, escape(self.x_label)).unwrap();
        writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(self.y_label)
        )
        .unwrap();

        if let (Some(slope), false) = (self.reference_slope, logs.is_empty()) {
            let n = logs.len() as f64;
            let cx = logs.iter().map(|p| p.0).sum::<f64>() / n;
            let cy = logs.iter().map(|p| p.1).sum::<f64>() / n;
            let line = |lx: f64| cy + slope * (lx - cx);
            writeln!(
                s,
                r#"<line class="reference" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="6 4"/>"#,
                sx(x0),
                sy(line(x0)),
                sx(x1),
                sy(line(x1))
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{}" y="{}" fill="gray">reference slope {}</text>"#,
                right - 150.0,
                top + 14.0,
                sig6(slope)
            )
            .unwrap();
        }

        for (&(x, y), &(lx, ly)) in self.points.iter().zip(&logs) {
            let (px, py) = (sx(lx), sy(ly));
            writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="3.5" fill="steelblue"/>"#).unwrap();
            writeln!(
                s,
                r#"<text class="point" x="{:.2}" y="{:.2}" data-x="{}" data-y="{}">({}, {})</text>"#,
                px + 6.0,
                py - 6.0,
                sig6(x),
                sig6(y),
                sig6(x),
                sig6(y)
            )
            .unwrap();
        }
        s.push_str("</svg>\n");
        s
    }
}

fn bounds<I: Iterator<Item = f64>>(it: I) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn pad(lo: &mut f64, hi: &mut f64) {
    if !lo.is_finite() || !hi.is_finite() {
        (*lo, *hi) = (0.0, 1.0);
    }
    let span = (*hi - *lo).max(0.2);
    let mid = (*hi + *lo) / 2.0;
    *lo = mid - 0.55 * span;
    *hi = mid + 0.55 * span;
}

/// Decade ticks when the range spans at least two decades, otherwise five even ticks.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let first = lo.ceil() as i64;
    let last = hi.floor() as i64;
    if last - first >= 1 {
        (first..=last).map(|e| e as f64).collect()
    } else {
        (0..5).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / 5.0).collect()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_carry_six_digits() {
        assert_eq!(sig6(1234.5678), "1.23457e3");
        let svg = LogLogPlot {
            title: "t",
            x_label: "x",
            y_label: "y",
            points: &[(10.0, 1.0), (1000.0, 10.0)],
            reference_slope: Some(0.5),
        }
        .render();
        assert!(svg.contains(r#"data-x="1.00000e3""#));
        assert!(svg.contains("class=\"reference\""));
        assert!(svg.ends_with("</svg>\n"));
    }
}
