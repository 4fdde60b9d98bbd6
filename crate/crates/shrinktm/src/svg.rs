//! SVG heatmaps of spatial fields. Gridded locations render as filled
//! cells; scattered ones as filled circles. The color scale is a symmetric
//! diverging blue-white-red ramp, so panels with the same bounds are
//! directly comparable.

use crate::geometry::Locations;

/// Render one field (values in original file order) with a symmetric scale
/// derived from `[lo, hi]` (typically training-data percentiles).
pub fn render_heatmap(locs: &Locations, values: &[f64], lo: f64, hi: f64, title: &str) -> String {
    assert_eq!(values.len(), locs.len(), "one value per location");
    let bound = lo.abs().max(hi.abs()).max(1e-12);
    match detect_grid(locs) {
        Some((xs, ys, cell_of)) => grid_svg(&xs, &ys, &cell_of, values, bound, title),
        None => scatter_svg(locs, values, bound, title),
    }
}

// exact-match grid detection: all coordinates on the lattice of their
// sorted unique values, and the lattice is fully filled
#[allow(clippy::type_complexity)]
fn detect_grid(locs: &Locations) -> Option<(Vec<f64>, Vec<f64>, Vec<(usize, usize)>)> {
    if locs.dim() != 2 {
        return None;
    }
    let mut xs: Vec<f64> = (0..locs.len()).map(|i| locs.point(i)[0]).collect();
    let mut ys: Vec<f64> = (0..locs.len()).map(|i| locs.point(i)[1]).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.dedup();
    if xs.len() * ys.len() != locs.len() {
        return None;
    }
    let mut cells = Vec::with_capacity(locs.len());
    for i in 0..locs.len() {
        let p = locs.point(i);
        let cx = xs.binary_search_by(|v| v.partial_cmp(&p[0]).unwrap()).ok()?;
        let cy = ys.binary_search_by(|v| v.partial_cmp(&p[1]).unwrap()).ok()?;
        cells.push((cx, cy));
    }
    Some((xs, ys, cells))
}

fn color(value: f64, bound: f64) -> String {
    // blue (-) through white to red (+)
    let t = (value / bound).clamp(-1.0, 1.0);
    let (lo_rgb, hi_rgb, mid) = ((59.0, 76.0, 192.0), (180.0, 4.0, 38.0), (242.0, 242.0, 242.0));
    let lerp = |a: (f64, f64, f64), b: (f64, f64, f64), s: f64| {
        (a.0 + (b.0 - a.0) * s, a.1 + (b.1 - a.1) * s, a.2 + (b.2 - a.2) * s)
    };
    let (r, g, b) = if t < 0.0 { lerp(mid, lo_rgb, -t) } else { lerp(mid, hi_rgb, t) };
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

const PANEL: f64 = 420.0;
const MARGIN: f64 = 24.0;

fn svg_header(title: &str) -> String {
    let size = PANEL + 2.0 * MARGIN;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{}\" \
         font-family=\"monospace\" font-size=\"12\">\n<text x=\"{MARGIN}\" y=\"16\">{}</text>\n",
        size + 20.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn grid_svg(
    xs: &[f64],
    ys: &[f64],
    cells: &[(usize, usize)],
    values: &[f64],
    bound: f64,
    title: &str,
) -> String {
    let mut out = svg_header(title);
    let cw = PANEL / xs.len() as f64;
    let ch = PANEL / ys.len() as f64;
    for (i, &(cx, cy)) in cells.iter().enumerate() {
        let x = MARGIN + cx as f64 * cw;
        // y axis points up in domain coordinates
        let y = MARGIN + 20.0 + (ys.len() - 1 - cy) as f64 * ch;
        out.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>\n",
            cw + 0.25,
            ch + 0.25,
            color(values[i], bound)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn scatter_svg(locs: &Locations, values: &[f64], bound: f64, title: &str) -> String {
    let n = locs.len();
    let dim = locs.dim();
    let (mut min_x, mut max_x, mut min_y, mut max_y) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let p = locs.point(i);
        let (px, py) = (p[0], if dim > 1 { p[1] } else { 0.0 });
        min_x = min_x.min(px);
        max_x = max_x.max(px);
        min_y = min_y.min(py);
        max_y = max_y.max(py);
    }
    let span_x = (max_x - min_x).max(1e-12);
    let span_y = (max_y - min_y).max(1e-12);
    let mut out = svg_header(title);
    let radius = (PANEL / (n as f64).sqrt() / 2.2).clamp(1.5, 12.0);
    for i in 0..n {
        let p = locs.point(i);
        let (px, py) = (p[0], if dim > 1 { p[1] } else { 0.0 });
        let x = MARGIN + (px - min_x) / span_x * PANEL;
        let y = MARGIN + 20.0 + (max_y - py) / span_y * PANEL;
        out.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{radius:.2}\" fill=\"{}\"/>\n",
            color(values[i], bound)
        ));
    }
    out.push_str("</svg>\n");
    out
}
