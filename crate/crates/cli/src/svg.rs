//! Minimal SVG scatter plots of 2-D embeddings.

use std::fmt::Write as _;
use std::path::Path;

use glle::{GlleError, Result};
use nalgebra::DMatrix;

pub const CANVAS: f64 = 800.0;
pub const MARGIN: f64 = 0.05 * CANVAS;
const RADIUS: f64 = 2.5;

/// Viridis anchor colors at t = 0, 0.25, 0.5, 0.75, 1.
const RAMP: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

/// Piecewise-linear viridis-like color for `t ∈ [0, 1]`.
pub fn ramp_color(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (RAMP.len() - 1) as f64;
    let i = (x.floor() as usize).min(RAMP.len() - 2);
    let f = x - i as f64;
    let c: Vec<u8> = (0..3)
        .map(|j| (RAMP[i][j] + f * (RAMP[i + 1][j] - RAMP[i][j])).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// One circle per row of `coords`, colored by `param`, axes fitted to the
/// bounding box inside an 800×800 canvas with 5% margins.
pub fn svg_string(coords: &DMatrix<f64>, param: &[f64]) -> Result<String> {
    if coords.ncols() != 2 {
        return Err(GlleError::InvalidArgument(format!(
            "scatter plots need p = 2, got p = {}",
            coords.ncols()
        )));
    }
    if param.len() != coords.nrows() {
        return Err(GlleError::InvalidArgument(format!(
            "{} params for {} points",
            param.len(),
            coords.nrows()
        )));
    }
    let (x_lo, x_hi) = range(coords.column(0).iter().copied());
    let (y_lo, y_hi) = range(coords.column(1).iter().copied());
    let (p_lo, p_hi) = range(param.iter().copied());
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let inner = CANVAS - 2.0 * MARGIN;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" height="{CANVAS}" viewBox="0 0 {CANVAS} {CANVAS}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, &pv) in param.iter().enumerate() {
        let cx = MARGIN + (coords[(i, 0)] - x_lo) / span(x_lo, x_hi) * inner;
        let cy = CANVAS - MARGIN - (coords[(i, 1)] - y_lo) / span(y_lo, y_hi) * inner;
        let t = if p_hi > p_lo { (pv - p_lo) / (p_hi - p_lo) } else { 0.0 };
        let _ = writeln!(
            s,
            r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="{RADIUS}" fill="{}"/>"#,
            ramp_color(t)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render_svg(coords: &DMatrix<f64>, param: &[f64], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, svg_string(coords, param)?)?;
    Ok(())
}
