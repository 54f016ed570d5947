//! Basis systems evaluated on a grid.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func_core::{Curve, FunctionalSample, Grid, RawUnit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisFamily {
    Bspline,
    Fourier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub family: BasisFamily,
    pub dimension: usize,
    pub grid: Grid,
}

impl BasisSpec {
    pub fn new(family: BasisFamily, dimension: usize, grid: Grid) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidParameter("basis dimension must be at least 1".into()));
        }
        Ok(BasisSpec {
            family,
            dimension,
            grid,
        })
    }

    /// `dimension x resolution` matrix of basis values, row `i` holding `b_{i+1}`.
    pub fn evaluate(&self) -> Vec<f64> {
        let pts = self.grid.points();
        let mut out = Vec::with_capacity(self.dimension * pts.len());
        match self.family {
            BasisFamily::Fourier => {
                for i in 1..=self.dimension {
                    out.extend(pts.iter().map(|&t| fourier(i, t)));
                }
            }
            BasisFamily::Bspline => {
                let rows: Vec<Vec<f64>> = pts.iter().map(|&t| bspline_row(self.dimension, t)).collect();
                for i in 0..self.dimension {
                    out.extend(rows.iter().map(|row| row[i]));
                }
            }
        }
        out
    }
}

/// `b_1 = 1`, `b_j = √2 sin(jπt)` for even `j`, `√2 cos((j−1)πt)` for odd `j > 1`.
pub fn fourier(j: usize, t: f64) -> f64 {
    use std::f64::consts::{PI, SQRT_2};
    if j == 1 {
        1.0
    } else if j.is_multiple_of(2) {
        SQRT_2 * (j as f64 * PI * t).sin()
    } else {
        SQRT_2 * ((j - 1) as f64 * PI * t).cos()
    }
}

/// Clamped knot vector with equidistant interior knots.
fn knots(dimension: usize, order: usize) -> Vec<f64> {
    let interior = dimension - order;
    let mut k = vec![0.0; order];
    k.extend((1..=interior).map(|i| i as f64 / (interior + 1) as f64));
    k.extend(std::iter::repeat_n(1.0, order));
    k
}

/// All `dimension` B-spline values at `t` (cubic, or lower order when
/// `dimension < 4`).
pub fn bspline_row(dimension: usize, t: f64) -> Vec<f64> {
    let order = dimension.min(4);
    let kn = knots(dimension, order);
    let t = t.clamp(0.0, 1.0);
    // order-1 indicators, with the right end assigned to the last interval
    let mut vals: Vec<f64> = (0..kn.len() - 1)
        .map(|i| {
            let inside = kn[i] <= t && t < kn[i + 1];
            let at_end = t == 1.0 && kn[i] < kn[i + 1] && kn[i + 1] == 1.0;
            if inside || at_end {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for p in 2..=order {
        let next: Vec<f64> = (0..kn.len() - p)
            .map(|i| {
                let mut v = 0.0;
                let d1 = kn[i + p - 1] - kn[i];
                if d1 > 0.0 {
                    v += (t - kn[i]) / d1 * vals[i];
                }
                let d2 = kn[i + p] - kn[i + 1];
                if d2 > 0.0 {
                    v += (kn[i + p] - t) / d2 * vals[i + 1];
                }
                v
            })
            .collect();
        vals = next;
    }
    vals.truncate(dimension);
    vals
}

/// Least-squares fit of `(position, value)` pairs by the first `dimension`
/// Fourier functions, evaluated on `grid`.
pub fn fourier_projection(positions: &[f64], values: &[f64], dimension: usize, grid: Grid) -> Result<Curve> {
    if positions.len() != values.len() {
        return Err(Error::InvalidParameter("positions and values differ in length".into()));
    }
    if positions.len() < dimension {
        return Err(Error::InvalidParameter(format!(
            "{} observations cannot determine {dimension} coefficients",
            positions.len()
        )));
    }
    let design = DMatrix::from_fn(positions.len(), dimension, |r, c| fourier(c + 1, positions[r]));
    let y = DVector::from_column_slice(values);
    let coef = design
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::InvalidParameter(format!("least squares failed: {e}")))?;
    Curve::new(
        grid,
        grid.points()
            .iter()
            .map(|&t| (0..dimension).map(|c| coef[c] * fourier(c + 1, t)).sum())
            .collect(),
    )
}

/// Fourier projection of every unit onto `grid`. Units with fewer
/// observations than `dimension` are reported together.
pub fn project_units(units: &[RawUnit], dimension: usize, grid: Grid) -> Result<FunctionalSample> {
    if units.is_empty() {
        return Err(Error::EmptySample);
    }
    let short: Vec<String> = units
        .iter()
        .filter(|u| u.positions.len() < dimension)
        .map(|u| u.id.clone())
        .collect();
    if !short.is_empty() {
        return Err(Error::InsufficientObservations(short));
    }
    let curves = units
        .iter()
        .map(|u| fourier_projection(&u.positions, &u.values, dimension, grid))
        .collect::<Result<Vec<_>>>()?;
    FunctionalSample::new(grid, &curves)
}
