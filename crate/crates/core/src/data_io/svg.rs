use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SvgStyle {
    pub width: f64,
    pub height: f64,
    pub marker_radius: f64,
    pub point_color: String,
    pub path_color: String,
    pub stroke_width: f64,
}

impl Default for SvgStyle {
    fn default() -> Self {
        SvgStyle {
            width: 480.0,
            height: 480.0,
            marker_radius: 1.5,
            point_color: "#1f4e79".into(),
            path_color: "#b03a2e".into(),
            stroke_width: 0.8,
        }
    }
}

fn xy(p: &[f64]) -> (f64, f64) {
    (
        p.first().copied().unwrap_or(0.0),
        p.get(1).copied().unwrap_or(0.0),
    )
}

/// Scatter of `points` plus one polyline per entry of `paths`, autoscaled with a 5%
/// margin. States with more than two coordinates are drawn by their first two.
pub fn render_svg(points: &[Vec<f64>], paths: &[Vec<Vec<f64>>], style: &SvgStyle) -> String {
    let all = points.iter().chain(paths.iter().flatten());
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    let mut projected = false;
    for p in all {
        projected |= p.len() > 2;
        let (x, y) = xy(p);
        if x.is_finite() && y.is_finite() {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    let widen = |lo: f64, hi: f64| {
        if hi - lo > 0.0 {
            (lo, hi)
        } else {
            (lo - 1.0, hi + 1.0)
        }
    };
    let (x0, x1) = widen(x0, x1);
    let (y0, y1) = widen(y0, y1);
    let (mx, my) = (0.05 * (x1 - x0), 0.05 * (y1 - y0));
    let (x0, x1, y0, y1) = (x0 - mx, x1 + mx, y0 - my, y1 + my);
    let (w, h) = (style.width, style.height);
    let sx = |x: f64| (x - x0) / (x1 - x0) * w;
    let sy = |y: f64| h - (y - y0) / (y1 - y0) * h;

    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    )
    .unwrap();
    if projected {
        s.push_str("<!-- projected onto the first two coordinates -->\n");
    }
    writeln!(
        s,
        "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>"
    )
    .unwrap();
    writeln!(
        s,
        "<g id=\"axes\" stroke=\"#888888\" stroke-width=\"0.5\"><line x1=\"0\" y1=\"{h}\" x2=\"{w}\" y2=\"{h}\"/><line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"{h}\"/></g>"
    )
    .unwrap();
    writeln!(
        s,
        "<g id=\"ticks\" font-family=\"monospace\" font-size=\"9\" fill=\"#555555\"><text x=\"2\" y=\"{:.3}\">{x0:.3}</text><text x=\"{:.3}\" y=\"{:.3}\" text-anchor=\"end\">{x1:.3}</text><text x=\"2\" y=\"10\">{y1:.3}</text></g>",
        h - 2.0,
        w - 2.0,
        h - 2.0
    )
    .unwrap();
    if !paths.is_empty() {
        writeln!(
            s,
            "<g id=\"paths\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\">",
            style.path_color, style.stroke_width
        )
        .unwrap();
        for path in paths {
            s.push_str("<polyline points=\"");
            for (i, p) in path.iter().enumerate() {
                let (x, y) = xy(p);
                if i > 0 {
                    s.push(' ');
                }
                write!(s, "{:.3},{:.3}", sx(x), sy(y)).unwrap();
            }
            s.push_str("\"/>\n");
        }
        s.push_str("</g>\n");
    }
    if !points.is_empty() {
        writeln!(s, "<g id=\"points\" fill=\"{}\">", style.point_color).unwrap();
        for p in points {
            let (x, y) = xy(p);
            writeln!(
                s,
                "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"{}\"/>",
                sx(x),
                sy(y),
                style.marker_radius
            )
            .unwrap();
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_svg_scatter(
    path: &Path,
    points: &[Vec<f64>],
    paths: &[Vec<Vec<f64>>],
    style: &SvgStyle,
) -> Result<()> {
    std::fs::write(path, render_svg(points, paths, style))?;
    Ok(())
}
