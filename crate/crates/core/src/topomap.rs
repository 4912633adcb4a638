//! Scalp maps: spherical-spline interpolation of electrode values, an
//! azimuthal-equidistant grid over the upper hemisphere, and a PPM raster.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numfmt::fmt9;
use crate::signal_io::write_text;

pub const DEFAULT_ORDER: u32 = 4;
pub const DEFAULT_TERMS: usize = 20;
pub const DEFAULT_LAMBDA: f64 = 1e-5;
pub const MIN_RESOLUTION: usize = 16;

const UNIT_TOLERANCE: f64 = 1e-6;
const BACKGROUND: [u8; 3] = [192, 192, 192];
const MARKER: [u8; 3] = [0, 0, 0];

/// Legendre-series kernel `g(x) = 1/(4π) Σ (2n+1)/(n(n+1))^m P_n(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineKernel {
    coeffs: Vec<f64>,
}

impl SplineKernel {
    pub fn new(order_m: u32, n_terms: usize) -> Self {
        let coeffs = (1..=n_terms)
            .map(|n| {
                let n = n as f64;
                (2.0 * n + 1.0) / (n * (n + 1.0)).powi(order_m as i32) / (4.0 * PI)
            })
            .collect();
        SplineKernel { coeffs }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(-1.0, 1.0);
        let (mut p_prev, mut p) = (1.0, x);
        let mut sum = 0.0;
        for (i, c) in self.coeffs.iter().enumerate() {
            let n = (i + 1) as f64;
            sum += c * p;
            let next = ((2.0 * n + 1.0) * x * p - n * p_prev) / (n + 1.0);
            p_prev = p;
            p = next;
        }
        sum
    }

    /// Largest omitted-term coefficient bound, for checking truncation.
    pub fn last_coefficient(&self) -> f64 {
        self.coeffs.last().copied().unwrap_or(0.0)
    }
}

/// Fitted spline: `f(p) = c0 + Σ w_i g(p·e_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalSpline {
    pub positions: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub constant: f64,
    pub lambda: f64,
    kernel: SplineKernel,
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Solve `[G + λI, 1; 1ᵀ, 0] [w; c0] = [v; 0]`.
pub fn spline_fit(
    positions: &[[f64; 3]],
    values: &[f64],
    order_m: u32,
    n_terms: usize,
    lambda: f64,
) -> Result<SphericalSpline> {
    let n = positions.len();
    if n < 3 {
        return Err(Error::arg(format!("need at least 3 electrodes, got {n}")));
    }
    if values.len() != n {
        return Err(Error::arg(format!("{n} positions but {} values", values.len())));
    }
    if order_m < 2 || n_terms == 0 || !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::arg("spline needs order >= 2, at least one term and lambda >= 0"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("electrode values must be finite"));
    }
    for (i, p) in positions.iter().enumerate() {
        if (dot(p, p) - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::arg(format!("electrode {i} is not on the unit sphere")));
        }
        for q in &positions[..i] {
            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
            if d2 < 1e-18 {
                return Err(Error::Singular(format!("electrode {i} duplicates an earlier position")));
            }
        }
    }
    let kernel = SplineKernel::new(order_m, n_terms);
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = kernel.eval(dot(&positions[i], &positions[j]));
        }
        a[(i, i)] += lambda;
        a[(i, n)] = 1.0;
        a[(n, i)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n + 1);
    for (i, v) in values.iter().enumerate() {
        rhs[i] = *v;
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("spline system has no unique solution".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("spline system is numerically singular".into()));
    }
    Ok(SphericalSpline {
        positions: positions.to_vec(),
        weights: sol.as_slice()[..n].to_vec(),
        constant: sol[n],
        lambda,
        kernel,
    })
}

impl SphericalSpline {
    /// Value at a unit vector.
    pub fn eval(&self, p: &[f64; 3]) -> f64 {
        self.constant
            + self
                .positions
                .iter()
                .zip(&self.weights)
                .map(|(e, w)| w * self.kernel.eval(dot(p, e)))
                .sum::<f64>()
    }

    /// Value at projected scalp coordinates, `None` outside the head.
    pub fn eval_projected(&self, u: f64, v: f64) -> Option<f64> {
        unproject(u, v).map(|p| self.eval(&p))
    }
}

/// Azimuthal-equidistant projection from the vertex: radius 1 at the
/// equator, `u` toward the right ear, `v` toward the nose.
pub fn project(p: &[f64; 3]) -> [f64; 2] {
    let theta = p[2].clamp(-1.0, 1.0).acos();
    let rho = theta / FRAC_PI_2;
    let h = (p[0] * p[0] + p[1] * p[1]).sqrt();
    if h == 0.0 {
        [0.0, 0.0]
    } else {
        [rho * p[0] / h, rho * p[1] / h]
    }
}

pub fn unproject(u: f64, v: f64) -> Option<[f64; 3]> {
    let rho = (u * u + v * v).sqrt();
    if rho > 1.0 {
        return None;
    }
    if rho == 0.0 {
        return Some([0.0, 0.0, 1.0]);
    }
    let theta = rho * FRAC_PI_2;
    let s = theta.sin();
    Some([s * u / rho, s * v / rho, theta.cos()])
}

/// Cell-centre coordinate of column `j` (or, negated, row `j`) on an R grid.
pub fn grid_coordinate(j: usize, resolution: usize) -> f64 {
    -1.0 + (2 * j + 1) as f64 / resolution as f64
}

/// R×R grid of interpolated values; row 0 is the front of the head.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalpField {
    pub resolution: usize,
    /// Row-major; 0 outside the mask.
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    /// Projected electrode sites.
    pub electrodes: Vec<[f64; 2]>,
}

impl ScalpField {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.resolution + col;
        self.mask[i].then_some(self.values[i])
    }

    /// (u, v) of the centre of cell (row, col).
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            grid_coordinate(col, self.resolution),
            -grid_coordinate(row, self.resolution),
        )
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        self.values
            .iter()
            .zip(&self.mask)
            .filter(|(_, m)| **m)
            .fold(None, |acc, (&v, _)| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }

    /// Grid as CSV, masked cells empty.
    pub fn to_csv(&self) -> String {
        let r = self.resolution;
        let mut out = String::new();
        for row in 0..r {
            let cells: Vec<String> = (0..r)
                .map(|col| self.get(row, col).map(fmt9).unwrap_or_default())
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn evaluate_field(model: &SphericalSpline, resolution: usize) -> Result<ScalpField> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::arg(format!(
            "resolution {resolution} below the minimum of {MIN_RESOLUTION}"
        )));
    }
    let rows: Vec<Vec<Option<f64>>> = (0..resolution)
        .into_par_iter()
        .map(|row| {
            let v = -grid_coordinate(row, resolution);
            (0..resolution)
                .map(|col| model.eval_projected(grid_coordinate(col, resolution), v))
                .collect()
        })
        .collect();
    let cells: Vec<Option<f64>> = rows.into_iter().flatten().collect();
    Ok(ScalpField {
        resolution,
        values: cells.iter().map(|c| c.unwrap_or(0.0)).collect(),
        mask: cells.iter().map(Option::is_some).collect(),
        electrodes: model.positions.iter().map(project).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorScale {
    pub min: f64,
    pub max: f64,
}

impl ColorScale {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min < max) || !min.is_finite() || !max.is_finite() {
            return Err(Error::arg(format!("colour scale needs min < max, got {min}..{max}")));
        }
        Ok(ColorScale { min, max })
    }

    /// Blue → white → red, clamped at both ends.
    pub fn color(&self, v: f64) -> [u8; 3] {
        let t = ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0);
        let ramp = |x: f64| (x * 255.0).round() as u8;
        if t < 0.5 {
            let c = ramp(2.0 * t);
            [c, c, 255]
        } else {
            let c = ramp(2.0 * (1.0 - t));
            [255, c, c]
        }
    }
}

/// Binary PPM (P6) of the field: one pixel per cell, grey outside the head,
/// black plus-shaped markers at electrode sites.
pub fn render_ppm(field: &ScalpField, scale: &ColorScale) -> Vec<u8> {
    let r = field.resolution;
    let mut pixels: Vec<[u8; 3]> = field
        .values
        .iter()
        .zip(&field.mask)
        .map(|(&v, &m)| if m { scale.color(v) } else { BACKGROUND })
        .collect();
    for e in &field.electrodes {
        let col = ((e[0] + 1.0) / 2.0 * r as f64).floor() as i64;
        let row = ((1.0 - e[1]) / 2.0 * r as f64).floor() as i64;
        for (dr, dc) in [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)] {
            let (rr, cc) = (row + dr, col + dc);
            if rr >= 0 && cc >= 0 && (rr as usize) < r && (cc as usize) < r {
                pixels[rr as usize * r + cc as usize] = MARKER;
            }
        }
    }
    let mut out = format!("P6\n{r} {r}\n255\n").into_bytes();
    out.extend(pixels.iter().flatten());
    out
}

pub fn render_map(field: &ScalpField, out_path: &Path, scale: &ColorScale) -> Result<()> {
    let bytes = render_ppm(field, scale);
    std::fs::write(out_path, bytes).map_err(|e| Error::io(out_path, e))
}

pub fn write_field_csv(field: &ScalpField, out_path: &Path) -> Result<()> {
    write_text(out_path, &field.to_csv())
}
