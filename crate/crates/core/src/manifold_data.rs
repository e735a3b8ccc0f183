//! Point clouds and the synthetic manifolds used for the unfolding runs.
//!
//! Parameterizations (all sampled uniformly in their parameters):
//!
//! - S-curve: `t ∈ [-3π/2, 3π/2]`, `u ∈ [0, 2]`,
//!   `x = (sin t, u, sign(t)(cos t - 1))`, param `t`.
//! - Swiss roll: `t ∈ [1.5π, 4.5π]`, `u ∈ [0, 21]`, `x = (t cos t, u, t sin t)`,
//!   param `t`. The holed variant rejects `t ∈ [2.5π, 3.5π] × u ∈ [7.35, 13.65]`,
//!   which is 10% of the parameter rectangle.
//! - Severed bowl: unit sphere below the equator, area-uniform in polar angle
//!   `θ` (measured from the bottom pole) up to `0.95 · π/2`, with a slit
//!   `|φ| ≤ π/12, θ > π/4` cut in from the rim on the `+x` side. Param `θ`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, GlleError, Result};

pub const SWISS_T_RANGE: (f64, f64) = (1.5 * PI, 4.5 * PI);
pub const SWISS_U_RANGE: (f64, f64) = (0.0, 21.0);
pub const SWISS_HOLE_T: (f64, f64) = (2.5 * PI, 3.5 * PI);
pub const SWISS_HOLE_U: (f64, f64) = (7.35, 13.65);
pub const BOWL_MAX_POLAR: f64 = 0.95 * PI / 2.0;
pub const BOWL_SLIT_HALF_WIDTH: f64 = PI / 12.0;
pub const BOWL_SLIT_MIN_POLAR: f64 = PI / 4.0;

/// `n` points in `d` dimensions plus a per-point coloring parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One point per row, `n × d`.
    pub points: DMatrix<f64>,
    pub param: Vec<f64>,
    pub name: String,
}

impl Dataset {
    pub fn new(points: DMatrix<f64>, param: Vec<f64>, name: impl Into<String>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return invalid("dataset needs at least one point and one coordinate");
        }
        if param.len() != points.nrows() {
            return invalid(format!(
                "param has {} entries for {} points",
                param.len(),
                points.nrows()
            ));
        }
        if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % points.nrows(), pos / points.nrows());
            return invalid(format!("non-finite coordinate at point {r}, column {c}"));
        }
        Ok(Self {
            points,
            param,
            name: name.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Point `i` as a column vector.
    pub fn point(&self, i: usize) -> nalgebra::DVector<f64> {
        self.points.row(i).transpose()
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return invalid("n must be at least 1");
    }
    Ok(())
}

fn from_rows(rows: Vec<[f64; 3]>, param: Vec<f64>, name: &str) -> Result<Dataset> {
    let n = rows.len();
    let points = DMatrix::from_fn(n, 3, |i, j| rows[i][j]);
    Dataset::new(points, param, name)
}

pub fn s_curve(n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut param = Vec::with_capacity(n);
    for _ in 0..n {
        let t = rng.gen_range(-1.5 * PI..=1.5 * PI);
        let u = rng.gen_range(0.0..=2.0);
        let z = if t == 0.0 { 0.0 } else { t.signum() * (t.cos() - 1.0) };
        rows.push([t.sin(), u, z]);
        param.push(t);
    }
    from_rows(rows, param, "s-curve")
}

pub fn in_swiss_hole(t: f64, u: f64) -> bool {
    (SWISS_HOLE_T.0..=SWISS_HOLE_T.1).contains(&t) && (SWISS_HOLE_U.0..=SWISS_HOLE_U.1).contains(&u)
}

pub fn swiss_roll(n: usize, with_hole: bool, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut param = Vec::with_capacity(n);
    while rows.len() < n {
        let t = rng.gen_range(SWISS_T_RANGE.0..=SWISS_T_RANGE.1);
        let u = rng.gen_range(SWISS_U_RANGE.0..=SWISS_U_RANGE.1);
        if with_hole && in_swiss_hole(t, u) {
            continue;
        }
        rows.push([t * t.cos(), u, t * t.sin()]);
        param.push(t);
    }
    let name = if with_hole { "swiss-roll-hole" } else { "swiss-roll" };
    from_rows(rows, param, name)
}

/// Polar angle from the bottom pole and azimuth of a point on the bowl.
pub fn bowl_angles(p: [f64; 3]) -> (f64, f64) {
    let theta = (-p[2]).clamp(-1.0, 1.0).acos();
    let phi = p[1].atan2(p[0]);
    (theta, phi)
}

pub fn in_bowl_slit(theta: f64, phi: f64) -> bool {
    phi.abs() <= BOWL_SLIT_HALF_WIDTH && theta > BOWL_SLIT_MIN_POLAR
}

pub fn severed_bowl(n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cos_max = BOWL_MAX_POLAR.cos();
    let mut rows = Vec::with_capacity(n);
    let mut param = Vec::with_capacity(n);
    while rows.len() < n {
        // cos θ uniform gives area-uniform samples on the cap.
        let c: f64 = rng.gen_range(cos_max..=1.0);
        let phi = rng.gen_range(-PI..PI);
        let theta = c.acos();
        if in_bowl_slit(theta, phi) {
            continue;
        }
        let s = (1.0 - c * c).max(0.0).sqrt();
        rows.push([s * phi.cos(), s * phi.sin(), -c]);
        param.push(theta);
    }
    from_rows(rows, param, "severed-bowl")
}

/// Writes `x0,...,x{d-1},param` with 17 significant digits per value.
pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let header: Vec<String> = (0..ds.dim())
        .map(|j| format!("x{j}"))
        .chain(std::iter::once("param".to_string()))
        .collect();
    write_table(path, &header, &ds.points, &ds.param)
}

pub(crate) fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn write_table(
    path: impl AsRef<Path>,
    header: &[String],
    coords: &DMatrix<f64>,
    last: &[f64],
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path.as_ref())
        .map_err(csv_io)?;
    w.write_record(header).map_err(csv_io)?;
    let mut record = Vec::with_capacity(coords.ncols() + 1);
    for i in 0..coords.nrows() {
        record.clear();
        record.extend(coords.row(i).iter().map(|&v| format_value(v)));
        record.push(format_value(last[i]));
        w.write_record(&record).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> GlleError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => GlleError::Io(io),
        other => GlleError::Parse {
            line: 0,
            detail: format!("{other:?}"),
        },
    }
}

/// Reads a CSV written by [`save_csv`]. The last column is the param; the
/// dimension is inferred from the header width.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(csv_io)?;
    let header_len = reader
        .headers()
        .map_err(|e| GlleError::Parse {
            line: 1,
            detail: e.to_string(),
        })?
        .len();
    if header_len < 2 {
        return Err(GlleError::Parse {
            line: 1,
            detail: "need at least one coordinate column and a param column".into(),
        });
    }
    let d = header_len - 1;
    let mut coords = Vec::new();
    let mut param = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| GlleError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            detail: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header_len {
            return Err(GlleError::Parse {
                line,
                detail: format!("expected {header_len} fields, found {}", record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| GlleError::Parse {
                line,
                detail: format!("field {} is not a number: {field:?}", j + 1),
            })?;
            if !v.is_finite() {
                return Err(GlleError::Parse {
                    line,
                    detail: format!("field {} is not finite", j + 1),
                });
            }
            if j < d {
                coords.push(v);
            } else {
                param.push(v);
            }
        }
    }
    let n = param.len();
    if n == 0 {
        return Err(GlleError::Parse {
            line: 2,
            detail: "no data rows".into(),
        });
    }
    let points = DMatrix::from_row_slice(n, d, &coords);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    Dataset::new(points, param, name)
}
