//! CSV and SVG writers.

use std::fmt::Write as _;

/// CSV text with a header row and LF line endings.
pub fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Line plot of recall against `m`, one polyline per series, with axes and a
/// legend.
pub fn recall_svg(title: &str, series: &[(String, Vec<(usize, f64)>)]) -> String {
    let (w, h) = (480.0, 320.0);
    let (left, right, top, bottom) = (50.0, 130.0, 30.0, 40.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let max_m = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.0))
        .max()
        .unwrap_or(1)
        .max(2);
    let x = |m: usize| left + pw * (m - 1) as f64 / (max_m - 1) as f64;
    let y = |r: f64| top + ph * (1.0 - r.clamp(0.0, 1.0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" font-size="13" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} V{} H{}" stroke="black" fill="none"/>"#,
        top + ph,
        left + pw
    );
    for tick in 0..=4 {
        let r = tick as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" font-size="10" text-anchor="end">{r:.2}</text>"#,
            left - 4.0,
            y(r) + 3.0
        );
    }
    let step = (max_m / 7).max(1);
    for m in (1..=max_m).step_by(step) {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" font-size="10" text-anchor="middle">{m}</text>"#,
            x(m),
            top + ph + 14.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">m</text>"#,
        left + pw / 2.0,
        h - 6.0
    );
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" font-size="11" transform="rotate(-90 12 {})" text-anchor="middle">recall</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(m, r)| format!("{:.1},{:.1}", x(m), y(r))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
        let ly = top + 14.0 * i as f64 + 6.0;
        let _ = writeln!(
            s,
            r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{2}" y="{3}" font-size="10">{4}</text>"#,
            w - right + 10.0,
            w - right + 28.0,
            w - right + 32.0,
            ly + 3.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
