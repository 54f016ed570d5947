//! Grid-based curves and surfaces on `T = [0, 1]`.
//!
//! Every curve of a [`FunctionalSample`] is stored on a shared equidistant
//! [`Grid`]; integrals over `T` (and `T x T` for [`Surface`]s) use the
//! trapezoidal rule. The partial-sum process and the self-normalizer live
//! here because every test in the crate is built from them.

mod io;
mod nu;

pub use io::{
    read_curve_csv, read_curve_csv_from, read_raw_observations, read_raw_observations_from, units_on_common_grid,
    write_curve_csv, write_curve_csv_to, RawUnit,
};
pub use nu::{self_normalizer, LambdaProfile, NormalizerKind, NuMeasure};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of grid points used when nothing else is requested.
pub const DEFAULT_RESOLUTION: usize = 100;

/// Count `floor(n * lambda)` with exact-rational semantics.
///
/// Fractions such as `3/20` are not representable in binary, so a plain
/// `(n as f64 * lambda).floor()` can land one below the intended integer.
/// Products within `1e-9` (relative) of an integer are snapped to it.
pub fn floor_count(n: usize, lambda: f64) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let x = n as f64 * lambda;
    let r = x.round();
    let k = if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r
    } else {
        x.floor()
    };
    (k as usize).min(n)
}

/// Equidistant grid `0 = t_0 < ... < t_{r-1} = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    resolution: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            resolution: DEFAULT_RESOLUTION,
        }
    }
}

impl Grid {
    pub fn new(resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidGrid(format!(
                "resolution must be at least 2, got {resolution}"
            )));
        }
        Ok(Grid { resolution })
    }

    /// Recognise an explicit list of points as an equidistant grid on [0, 1].
    pub fn from_points(points: &[f64]) -> Result<Self> {
        let grid = Grid::new(points.len())?;
        let h = grid.step();
        if points[0].abs() > 1e-12 || (points[points.len() - 1] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidGrid(format!(
                "grid must start at 0 and end at 1, got [{}, {}]",
                points[0],
                points[points.len() - 1]
            )));
        }
        for (i, w) in points.windows(2).enumerate() {
            let d = w[1] - w[0];
            if d.is_nan() || d <= 0.0 {
                return Err(Error::InvalidGrid(format!(
                    "points not strictly increasing at position {}",
                    i + 1
                )));
            }
            // 1e-12 relative, plus the rounding of a difference of two values in [0, 1]
            if (d - h).abs() > 1e-12 * h + 4.0 * f64::EPSILON {
                return Err(Error::InvalidGrid(format!(
                    "non-uniform spacing at position {}: {d} vs {h}",
                    i + 1
                )));
            }
        }
        Ok(grid)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn step(&self) -> f64 {
        1.0 / (self.resolution - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        i as f64 / (self.resolution - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.resolution).map(|i| self.point(i)).collect()
    }

    /// Trapezoidal quadrature weights; they sum to one.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.step();
        let mut w = vec![h; self.resolution];
        w[0] = 0.5 * h;
        w[self.resolution - 1] = 0.5 * h;
        w
    }

    /// Trapezoidal approximation of `int_T f(t) dt`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.resolution);
        let n = values.len();
        let inner: f64 = values[1..n - 1].iter().sum();
        self.step() * (inner + 0.5 * (values[0] + values[n - 1]))
    }

    /// Trapezoidal approximation of `int_T f(t) g(t) dt`.
    pub fn integrate_product(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.resolution);
        debug_assert_eq!(g.len(), self.resolution);
        let n = f.len();
        let inner: f64 = f[1..n - 1].iter().zip(&g[1..n - 1]).map(|(a, b)| a * b).sum();
        self.step() * (inner + 0.5 * (f[0] * g[0] + f[n - 1] * g[n - 1]))
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self.resolution != other.resolution {
            return Err(Error::GridMismatch {
                left: self.resolution,
                right: other.resolution,
            });
        }
        Ok(())
    }
}

/// A function on `T` evaluated at the points of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    grid: Grid,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.resolution() {
            return Err(Error::InvalidCurve(format!(
                "expected {} values, got {}",
                grid.resolution(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve(format!("non-finite value at index {i}")));
        }
        Ok(Curve { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().into_iter().map(f).collect();
        Curve { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Curve {
            grid,
            values: vec![c; grid.resolution()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Curve::constant(grid, 0.0)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `int_T f(t)^2 dt`
    pub fn norm_sq(&self) -> f64 {
        self.grid.integrate_product(&self.values, &self.values)
    }

    pub fn scaled(&self, c: f64) -> Curve {
        Curve {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add(&self, other: &Curve) -> Result<Curve> {
        self.grid.check_same(&other.grid)?;
        Ok(Curve {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Curve) -> Result<Curve> {
        self.grid.check_same(&other.grid)?;
        Ok(Curve {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }
}

/// Trapezoidal `<f, g>` in `L^2(T)`.
pub fn l2_inner(f: &Curve, g: &Curve) -> Result<f64> {
    f.grid.check_same(&g.grid)?;
    Ok(f.grid.integrate_product(&f.values, &g.values))
}

/// `n` curves on a common grid, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    grid: Grid,
    n: usize,
    data: Vec<f64>,
}

impl FunctionalSample {
    pub fn new(grid: Grid, curves: &[Curve]) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut data = Vec::with_capacity(curves.len() * grid.resolution());
        for c in curves {
            grid.check_same(&c.grid)?;
            data.extend_from_slice(&c.values);
        }
        Ok(FunctionalSample {
            grid,
            n: curves.len(),
            data,
        })
    }

    pub fn from_rows(grid: Grid, rows: Vec<Vec<f64>>) -> Result<Self> {
        let curves = rows
            .into_iter()
            .map(|r| Curve::new(grid, r))
            .collect::<Result<Vec<_>>>()?;
        FunctionalSample::new(grid, &curves)
    }

    /// Build from a flat row-major buffer of `n * resolution` values.
    pub fn from_flat(grid: Grid, data: Vec<f64>) -> Result<Self> {
        let r = grid.resolution();
        if data.is_empty() {
            return Err(Error::EmptySample);
        }
        if !data.len().is_multiple_of(r) {
            return Err(Error::InvalidCurve(format!(
                "buffer length {} is not a multiple of the resolution {r}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve(format!(
                "non-finite value in curve {} at index {}",
                i / r + 1,
                i % r
            )));
        }
        Ok(FunctionalSample {
            grid,
            n: data.len() / r,
            data,
        })
    }

    /// Sample of scalar-like curves: curve `j` is constant at `levels[j]`.
    pub fn constant_curves(grid: Grid, levels: &[f64]) -> Result<Self> {
        let curves: Vec<Curve> = levels.iter().map(|&c| Curve::constant(grid, c)).collect();
        FunctionalSample::new(grid, &curves)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Values of curve `j` (0-based).
    pub fn curve(&self, j: usize) -> &[f64] {
        let r = self.grid.resolution();
        &self.data[j * r..(j + 1) * r]
    }

    pub fn curve_owned(&self, j: usize) -> Curve {
        Curve {
            grid: self.grid,
            values: self.curve(j).to_vec(),
        }
    }

    pub fn curves(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.grid.resolution())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn scaled(&self, c: f64) -> FunctionalSample {
        FunctionalSample {
            grid: self.grid,
            n: self.n,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    /// Add the same curve to every observation.
    pub fn shifted(&self, shift: &Curve) -> Result<FunctionalSample> {
        self.grid.check_same(&shift.grid)?;
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.grid.resolution()) {
            for (v, s) in row.iter_mut().zip(&shift.values) {
                *v += s;
            }
        }
        Ok(FunctionalSample {
            grid: self.grid,
            n: self.n,
            data,
        })
    }

    /// Curves `start..end` (0-based, half-open) as a new sample.
    pub fn slice(&self, start: usize, end: usize) -> Result<FunctionalSample> {
        if start >= end || end > self.n {
            return Err(Error::IndexOutOfRange {
                from: start + 1,
                to: end,
                n: self.n,
            });
        }
        let r = self.grid.resolution();
        Ok(FunctionalSample {
            grid: self.grid,
            n: end - start,
            data: self.data[start * r..end * r].to_vec(),
        })
    }

    /// Sum of curves `start..end` (0-based, half-open), accumulated in index order.
    pub(crate) fn window_sum(&self, start: usize, end: usize) -> Vec<f64> {
        let mut acc = vec![0.0; self.grid.resolution()];
        for j in start..end {
            for (a, v) in acc.iter_mut().zip(self.curve(j)) {
                *a += v;
            }
        }
        acc
    }

    /// Pointwise sample mean.
    pub fn mean_curve(&self) -> Curve {
        let mut m = self.window_sum(0, self.n);
        let n = self.n as f64;
        m.iter_mut().for_each(|v| *v /= n);
        Curve {
            grid: self.grid,
            values: m,
        }
    }
}

/// `S_n(t, lambda) = (1/n) sum_{j <= floor(n lambda)} X_j(t)`.
pub fn partial_sum(sample: &FunctionalSample, lambda: f64) -> Curve {
    let k = floor_count(sample.n(), lambda);
    let n = sample.n() as f64;
    let mut values = sample.window_sum(0, k);
    values.iter_mut().for_each(|v| *v /= n);
    Curve {
        grid: sample.grid(),
        values,
    }
}

/// Mean of curves `from_index..=to_index` (1-based, inclusive).
pub fn range_mean(sample: &FunctionalSample, from_index: usize, to_index: usize) -> Result<Curve> {
    if from_index < 1 || from_index > to_index || to_index > sample.n() {
        return Err(Error::IndexOutOfRange {
            from: from_index,
            to: to_index,
            n: sample.n(),
        });
    }
    let count = (to_index - from_index + 1) as f64;
    let mut values = sample.window_sum(from_index - 1, to_index);
    values.iter_mut().for_each(|v| *v /= count);
    Ok(Curve {
        grid: sample.grid(),
        values,
    })
}

/// A function on `T x T` stored row-major, `values[a * r + b] = f(t_a, t_b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    grid: Grid,
    values: Vec<f64>,
}

impl Surface {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let r = grid.resolution();
        if values.len() != r * r {
            return Err(Error::InvalidCurve(format!(
                "surface needs {} values, got {}",
                r * r,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve("non-finite surface value".into()));
        }
        Ok(Surface { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        let r = grid.resolution();
        Surface {
            grid,
            values: vec![0.0; r * r],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.grid.resolution() + b]
    }

    pub fn transpose(&self) -> Surface {
        let r = self.grid.resolution();
        let mut out = vec![0.0; r * r];
        for a in 0..r {
            for b in 0..r {
                out[b * r + a] = self.values[a * r + b];
            }
        }
        Surface {
            grid: self.grid,
            values: out,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        let r = self.grid.resolution();
        (0..r).all(|a| (0..a).all(|b| self.values[a * r + b] == self.values[b * r + a]))
    }

    pub fn sub(&self, other: &Surface) -> Result<Surface> {
        self.grid.check_same(&other.grid)?;
        Ok(Surface {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scaled(&self, c: f64) -> Surface {
        Surface {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Tensor-product trapezoid of `f(s, t)` over `T x T`.
    pub fn integrate(&self) -> f64 {
        let w = self.grid.trapezoid_weights();
        let r = w.len();
        let mut total = 0.0;
        for a in 0..r {
            let row = &self.values[a * r..(a + 1) * r];
            let inner: f64 = row.iter().zip(&w).map(|(v, wb)| v * wb).sum();
            total += w[a] * inner;
        }
        total
    }

    /// `iint f(s, t)^2 ds dt`
    pub fn norm_sq(&self) -> f64 {
        let w = self.grid.trapezoid_weights();
        let r = w.len();
        let mut total = 0.0;
        for a in 0..r {
            let row = &self.values[a * r..(a + 1) * r];
            let inner: f64 = row.iter().zip(&w).map(|(v, wb)| v * v * wb).sum();
            total += w[a] * inner;
        }
        total
    }
}
