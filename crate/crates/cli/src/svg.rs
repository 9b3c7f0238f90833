//! Static line plots, one panel per quantity, stacked vertically.

use std::fmt::Write;

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 180.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 34.0;

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub series: Vec<Series>,
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) =
        values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + hi.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Roughly five ticks at 1, 2 or 5 times a power of ten.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|k| k * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(panels: &[Panel]) -> String {
    let total_h = PANEL_H * panels.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W}" height="{total_h}" viewBox="0 0 {PANEL_W} {total_h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, panel) in panels.iter().enumerate() {
        let top = k as f64 * PANEL_H;
        let (x0, x1) = range(panel.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
        let (y0, y1) = range(panel.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
        let (left, right) = (MARGIN_L, PANEL_W - MARGIN_R);
        let (upper, lower) = (top + MARGIN_T, top + PANEL_H - MARGIN_B);
        let px = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
        let py = |y: f64| lower - (y - y0) / (y1 - y0) * (lower - upper);
        let _ = writeln!(s, r#"<text x="{left}" y="{}" font-size="13">{}</text>"#, top + 18.0, escape(&panel.title));
        let _ = writeln!(
            s,
            r##"<rect x="{left}" y="{upper}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
            right - left,
            lower - upper
        );
        for t in ticks(x0, x1) {
            let x = px(t);
            let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{lower}" x2="{x:.2}" y2="{}" stroke="#444"/>"##, lower + 4.0);
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, lower + 15.0, label(t));
        }
        for t in ticks(y0, y1) {
            let y = py(t);
            let _ = writeln!(s, r##"<line x1="{}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="#444"/>"##, left - 4.0);
            let _ = writeln!(s, r##"<line x1="{left}" y1="{y:.2}" x2="{right}" y2="{y:.2}" stroke="#ddd"/>"##);
            let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, left - 6.0, y + 4.0, label(t));
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (left + right) / 2.0,
            lower + 29.0,
            escape(&panel.x_label)
        );
        for (i, series) in panel.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<String> = series
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
            if panel.series.len() > 1 {
                let ly = upper + 14.0 + 14.0 * i as f64;
                let _ = writeln!(
                    s,
                    r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
                    right - 110.0,
                    right - 90.0
                );
                let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, right - 85.0, ly + 4.0, escape(&series.name));
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let t = ticks(-0.3, 0.3);
        let expect = [-0.2, 0.0, 0.2];
        assert_eq!(t.len(), expect.len());
        assert!(t.iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-12), "{t:?}");
    }

    #[test]
    fn renders_every_series() {
        let panel = Panel {
            title: "a < b".into(),
            x_label: "t".into(),
            series: vec![
                Series { name: "one".into(), points: vec![(0.0, 0.0), (1.0, 1.0)] },
                Series { name: "two".into(), points: vec![(0.0, 1.0), (1.0, 0.0)] },
            ],
        };
        let svg = render(&[panel]);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a &lt; b"));
    }
}
