//! Minimal SVG line charts. Plots are a convenience; CSV is the contract.

use std::fmt::Write;

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    (x0, x1, y0, y1)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1, y0, y1) = bounds(series);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-size="16" text-anchor="middle" font-family="sans-serif">{}</text>"#, W / 2.0, esc(title));
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {PAD} L{PAD} {} L{} {}" stroke="black" fill="none"/>"#,
        H - PAD,
        W - PAD,
        H - PAD
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" font-size="11" text-anchor="middle" font-family="sans-serif">{:.3}</text>"#, sx(fx), H - PAD + 16.0, fx);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end" font-family="sans-serif">{:.3}</text>"#, PAD - 6.0, sy(fy) + 4.0, fy);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="13" text-anchor="middle" font-family="sans-serif">{}</text>"#, W / 2.0, H - 12.0, esc(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" font-size="13" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        let mut pen_up = true;
        for &(x, y) in &ser.points {
            if !(x.is_finite() && y.is_finite()) {
                pen_up = true;
                continue;
            }
            let _ = write!(d, "{}{:.2} {:.2} ", if pen_up { "M" } else { "L" }, sx(x), sy(y));
            pen_up = false;
        }
        let _ = writeln!(s, r#"<path d="{}" stroke="{color}" stroke-width="1.5" fill="none"/>"#, d.trim_end());
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}" font-family="sans-serif">{}</text>"#,
            W - PAD - 120.0,
            PAD + 16.0 * i as f64,
            esc(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}
