//! Deterministic SVG scatter rendering: same input, byte-identical output.
//! No timestamps, no external renderer. Points are colored by their label via
//! a fixed viridis ramp; rejected points are drawn as hollow markers.

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 40.0;
const RADIUS: f64 = 3.0;

/// Piecewise-linear approximation of the viridis colormap.
const VIRIDIS: [(u8, u8, u8); 9] = [
    (68, 1, 84),
    (71, 44, 122),
    (59, 81, 139),
    (44, 113, 142),
    (33, 144, 141),
    (39, 173, 129),
    (92, 200, 99),
    (170, 220, 50),
    (253, 231, 37),
];

/// Map `t` in [0,1] onto the viridis ramp (clamped outside).
pub fn viridis(t: f64) -> (u8, u8, u8) {
    let t = t.clamp(0.0, 1.0);
    let scaled = t * (VIRIDIS.len() - 1) as f64;
    let lo = scaled.floor() as usize;
    if lo + 1 >= VIRIDIS.len() {
        return VIRIDIS[VIRIDIS.len() - 1];
    }
    let frac = scaled - lo as f64;
    let (r0, g0, b0) = VIRIDIS[lo];
    let (r1, g1, b1) = VIRIDIS[lo + 1];
    let mix = |a: u8, b: u8| (a as f64 + frac * (b as f64 - a as f64)).round() as u8;
    (mix(r0, r1), mix(g0, g1), mix(b0, b1))
}

fn hex(color: (u8, u8, u8)) -> String {
    format!("#{:02x}{:02x}{:02x}", color.0, color.1, color.2)
}

/// Render a 2-D scatter as an SVG document. Labels, when present, drive the
/// point colors (affinely mapped onto the colormap); without labels every
/// point uses the mid-ramp color. `rejected[i]` switches point `i` to a
/// hollow marker.
pub fn scatter_svg(points: &[(f64, f64)], labels: Option<&[f64]>, rejected: &[bool]) -> String {
    let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    let pad = |lo: f64, hi: f64| {
        let span = hi - lo;
        if span > 0.0 {
            (lo - 0.05 * span, hi + 0.05 * span)
        } else {
            (lo - 1.0, hi + 1.0)
        }
    };
    let (xmin, xmax) = pad(xmin, xmax);
    let (ymin, ymax) = pad(ymin, ymax);

    let (mut lmin, mut lmax) = (f64::INFINITY, f64::NEG_INFINITY);
    if let Some(ls) = labels {
        for &l in ls {
            lmin = lmin.min(l);
            lmax = lmax.max(l);
        }
    }

    let sx = (WIDTH - 2.0 * MARGIN) / (xmax - xmin);
    let sy = (HEIGHT - 2.0 * MARGIN) / (ymax - ymin);
    let mut svg = String::with_capacity(points.len() * 64 + 256);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"
    ));
    for (i, &(x, y)) in points.iter().enumerate() {
        let cx = MARGIN + (x - xmin) * sx;
        let cy = HEIGHT - MARGIN - (y - ymin) * sy; // SVG y grows downward
        let color = match labels {
            Some(ls) if lmax > lmin => hex(viridis((ls[i] - lmin) / (lmax - lmin))),
            Some(_) => hex(viridis(0.5)),
            None => hex(viridis(0.5)),
        };
        if rejected.get(i).copied().unwrap_or(false) {
            svg.push_str(&format!(
                "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{RADIUS}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\"/>\n"
            ));
        } else {
            svg.push_str(&format!(
                "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{RADIUS}\" fill=\"{color}\"/>\n"
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}
