//! Minimal standalone SVG writers. Output depends only on the inputs, so
//! repeated runs are byte-identical.

use std::fmt::Write;

pub const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

pub fn color(group: usize) -> &'static str {
    PALETTE[group % PALETTE.len()]
}

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub(crate) fn open(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        width / 2.0,
        escape(title)
    );
}

/// Labelled scatter plot scaled into a fixed canvas.
pub fn scatter(title: &str, names: &[String], pts: &[(f64, f64)], groups: Option<&[usize]>) -> String {
    let (w, h, pad) = (640.0, 520.0, 60.0);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let sx = if x1 > x0 { (w - 2.0 * pad) / (x1 - x0) } else { 1.0 };
    let sy = if y1 > y0 { (h - 2.0 * pad) / (y1 - y0) } else { 1.0 };
    let mut out = String::new();
    open(&mut out, w, h, title);
    for (i, &(x, y)) in pts.iter().enumerate() {
        let px = pad + (x - x0) * sx;
        let py = h - pad - (y - y0) * sy;
        let fill = color(groups.map(|g| g[i]).unwrap_or(0));
        let _ = writeln!(
            out,
            r#"<circle cx="{px:.2}" cy="{py:.2}" r="5" fill="{fill}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            px + 7.0,
            py + 4.0,
            escape(&names[i])
        );
    }
    out.push_str("</svg>\n");
    out
}
