//! CSV tables and small SVG scatter plots.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use super::fit::{SlopeFit, Transform};
use crate::exponents::PhaseCell;

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

pub fn csv_string<T: Serialize>(rows: &[T]) -> io::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
    String::from_utf8(bytes).map_err(io::Error::other)
}

/// Scatter of transformed points with an optional fitted line.
pub fn svg_scatter(title: &str, points: &[(f64, f64)], xt: Transform, yt: Transform, fit: Option<&SlopeFit>) -> String {
    let (w, h, m) = (640.0, 420.0, 60.0);
    let pts: Vec<(f64, f64)> = points
        .iter()
        .map(|&(x, y)| (xt.apply(x), yt.apply(y)))
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    if pts.is_empty() {
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">no finite points</text>"#, w / 2.0, h / 2.0);
        s.push_str("</svg>\n");
        return s;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if let Some(f) = fit {
        for x in [x0, x1] {
            y0 = y0.min(f.predict(x));
            y1 = y1.max(f.predict(x));
        }
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let _ = writeln!(s, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m);
    let _ = writeln!(s, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m);
    for (v, x) in [(x0, px(x0)), (x1, px(x1))] {
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{v:.3}</text>"#, h - m + 16.0);
    }
    for (v, y) in [(y0, py(y0)), (y1, py(y1))] {
        let _ = writeln!(s, r#"<text x="{}" y="{y:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.3}</text>"#, m - 6.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}(x)</text>"#, w / 2.0, h - 14.0, xt.name());
    let _ = writeln!(s, r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})" text-anchor="middle">{}(y)</text>"#, h / 2.0, h / 2.0, yt.name());
    for &(x, y) in &pts {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="steelblue"/>"#, px(x), py(y));
    }
    if let Some(f) = fit {
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="firebrick" stroke-width="1.5"/>"#,
            px(x0),
            py(f.predict(x0)),
            px(x1),
            py(f.predict(x1))
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="44" font-family="sans-serif" font-size="12" text-anchor="end">slope {:.4}, R² {:.4}</text>"#,
            w - m,
            f.slope,
            f.r_squared
        );
    }
    s.push_str("</svg>\n");
    s
}

fn phase_colour(dominant: &str) -> &'static str {
    match dominant {
        "short" => "#4e79a7",
        "ll" => "#59a14f",
        "hl" => "#f28e2b",
        "hh" => "#e15759",
        _ => "#555555",
    }
}

/// Heatmap of dominant types on the unit square; ties are drawn dark grey.
pub fn svg_phase(title: &str, cells: &[PhaseCell], resolution: usize, labels: (&str, &str)) -> String {
    let (size, m) = (480.0, 60.0);
    let r = resolution.max(1) as f64;
    let cw = size / r;
    let (w, h) = (size + 2.0 * m + 110.0, size + 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#, m + size / 2.0, escape(title));
    for c in cells {
        let px = m + (c.x - 0.5 / r) * size;
        let py = m + (1.0 - c.y - 0.5 / r) * size;
        let _ = writeln!(
            s,
            r#"<rect x="{px:.2}" y="{py:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            cw + 0.05,
            cw + 0.05,
            phase_colour(&c.dominant)
        );
    }
    let _ = writeln!(s, r#"<rect x="{m}" y="{m}" width="{size}" height="{size}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#, m + size / 2.0, h - 20.0, escape(labels.0));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        m + size / 2.0,
        m + size / 2.0,
        escape(labels.1)
    );
    for t in [0.0, 0.5, 1.0] {
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{t}</text>"#, m + t * size, m + size + 16.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{t}</text>"#, m - 6.0, m + (1.0 - t) * size + 4.0);
    }
    for (i, (name, key)) in [("short", "short"), ("ll", "ll"), ("hl", "hl"), ("hh", "hh"), ("tie", "tie")].iter().enumerate() {
        let y = m + 20.0 + 24.0 * i as f64;
        let x = m + size + 20.0;
        let _ = writeln!(s, r#"<rect x="{x}" y="{}" width="14" height="14" fill="{}"/>"#, y - 11.0, phase_colour(key));
        let _ = writeln!(s, r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="12">{name}</text>"#, x + 20.0);
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(path: &Path, svg: &str) -> io::Result<()> {
    fs::write(path, svg)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::fit::fit_slope;

    #[derive(Serialize)]
    struct Row {
        k: f64,
        mean: f64,
    }

    #[test]
    fn csv_has_header_and_rows() {
        let s = csv_string(&[Row { k: 1.0, mean: 2.5 }, Row { k: 2.0, mean: 3.0 }]).unwrap();
        assert_eq!(s, "k,mean\n1.0,2.5\n2.0,3.0\n");
    }

    #[test]
    fn svg_is_well_formed() {
        let pts: Vec<(f64, f64)> = (1..6).map(|i| (i as f64, (i * i) as f64)).collect();
        let f = fit_slope(&pts, Transform::Log, Transform::Log).unwrap();
        let s = svg_scatter("a < b", &pts, Transform::Log, Transform::Log, Some(&f));
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<circle").count(), 5);
        assert!(s.contains("a &lt; b"));
    }
    #[test]
    fn phase_svg_has_one_rect_per_cell() {
        let base = crate::model::ModelParams::reference();
        let cells = crate::exponents::phase_diagram(&base, crate::exponents::PhaseAxes::SigmaTau, 8);
        let s = svg_phase("phase", &cells, 8, ("x", "y"));
        assert!(s.trim_end().ends_with("</svg>"));
        // cells + background + frame + 5 legend swatches
        assert_eq!(s.matches("<rect").count(), 64 + 2 + 5);
    }
}
