//! Time grids and piecewise-linear waveforms.
//!
//! All grids are window-relative: they start at `0` and end at the window
//! length `T_f`. Waveform data is stored time-major, i.e. a waveform with
//! `N` nodes and interface dimension `d` is a flat vector of `N` blocks of
//! length `d`. Interpolation matrices therefore act blockwise with scalar
//! weights.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative distance (in units of the window length) within which a query
/// time is snapped onto a grid node.
pub const NODE_SNAP: f64 = 1e-12;

/// Strictly increasing time points `0 = t_0 < t_1 < ... < t_{N-1} = T_f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;

    fn try_from(points: Vec<f64>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(g: TimeGrid) -> Self {
        g.points
    }
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::BadCount(points.len()));
        }
        if points[0] != 0.0 {
            return Err(Error::BadEndpoints { first: points[0] });
        }
        for (i, pair) in points.windows(2).enumerate() {
            // `!(a < b)` also rejects NaN.
            if !(pair[0] < pair[1]) || !pair[1].is_finite() {
                return Err(Error::NonMonotonic { index: i + 1 });
            }
        }
        Ok(Self { points })
    }

    /// `n` equidistant points on `[0, t_end]`. The last point is exactly `t_end`.
    pub fn equidistant(n: usize, t_end: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::BadCount(n));
        }
        if !(t_end > 0.0) {
            return Err(Error::BadEndpoints { first: t_end });
        }
        let dt = t_end / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        points[n - 1] = t_end;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Number of steps (segments).
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn step_sizes(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.windows(2).map(|p| p[1] - p[0])
    }

    fn tolerance(&self) -> f64 {
        NODE_SNAP * self.end()
    }

    pub(crate) fn check_same_window(&self, other: &TimeGrid) -> Result<()> {
        let tol = self.tolerance().max(other.tolerance());
        if (self.end() - other.end()).abs() > tol {
            return Err(Error::WindowMismatch {
                expected: self.end(),
                found: other.end(),
            });
        }
        Ok(())
    }

    /// Interpolation stencil of the hat-function basis at time `t`.
    pub fn locate(&self, t: f64) -> Result<Stencil> {
        let end = self.end();
        let tol = self.tolerance();
        if !(t >= -tol && t <= end + tol) {
            return Err(Error::OutOfWindow { t, end });
        }
        let pts = &self.points;
        let upper = pts.partition_point(|&p| p <= t);
        let lo = upper.saturating_sub(1).min(pts.len() - 2);
        let hi = lo + 1;
        if (t - pts[lo]).abs() <= tol {
            return Ok(Stencil::node(lo));
        }
        if (pts[hi] - t).abs() <= tol {
            return Ok(Stencil::node(hi));
        }
        let w_hi = (t - pts[lo]) / (pts[hi] - pts[lo]);
        Ok(Stencil {
            lo,
            hi,
            w_lo: 1.0 - w_hi,
            w_hi,
        })
    }
}

/// At most two nonzero interpolation weights. A node hit has `lo == hi`
/// and weight `(1, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub lo: usize,
    pub hi: usize,
    pub w_lo: f64,
    pub w_hi: f64,
}

impl Stencil {
    fn node(i: usize) -> Self {
        Self {
            lo: i,
            hi: i,
            w_lo: 1.0,
            w_hi: 0.0,
        }
    }

    pub fn is_node(&self) -> bool {
        self.lo == self.hi
    }

    /// Applies the stencil to time-major data with block size `dim`.
    #[inline]
    pub fn apply_into(&self, values: &[f64], dim: usize, out: &mut [f64]) {
        let a = &values[self.lo * dim..(self.lo + 1) * dim];
        if self.is_node() {
            out.copy_from_slice(a);
        } else {
            let b = &values[self.hi * dim..(self.hi + 1) * dim];
            for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
                *o = self.w_lo * x + self.w_hi * y;
            }
        }
    }
}

/// A time grid together with `d`-dimensional nodal data, evaluable anywhere
/// in the window by linear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl Waveform {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if values.len() != grid.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: grid.len() * dim,
                found: values.len(),
            });
        }
        Ok(Self { grid, dim, values })
    }

    /// Constant-in-time waveform on `grid`.
    pub fn constant(grid: TimeGrid, value: &[f64]) -> Self {
        let values = value.repeat(grid.len());
        Self {
            grid,
            dim: value.len(),
            values,
        }
    }

    /// Builds a waveform by evaluating `f` at every grid node.
    pub fn from_fn(grid: TimeGrid, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Self {
        let mut values = vec![0.0; grid.len() * dim];
        for (t, block) in grid.points().iter().zip(values.chunks_exact_mut(dim)) {
            f(*t, block);
        }
        Self { grid, dim, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn end(&self) -> f64 {
        self.grid.end()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn first(&self) -> &[f64] {
        self.node(0)
    }

    pub fn last(&self) -> &[f64] {
        self.node(self.len() - 1)
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        if out.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: out.len(),
            });
        }
        self.grid.locate(t)?.apply_into(&self.values, self.dim, out);
        Ok(())
    }

    /// Slope of the interpolant on the segment `[t_i, t_{i+1}]`.
    pub fn segment_slope(&self, i: usize) -> Vec<f64> {
        let dt = self.grid.points()[i + 1] - self.grid.points()[i];
        self.node(i)
            .iter()
            .zip(self.node(i + 1))
            .map(|(a, b)| (b - a) / dt)
            .collect()
    }

    /// Samples the interpolant on `target`. Sampling onto the waveform's own
    /// grid returns the values verbatim.
    pub fn sample(&self, target: &TimeGrid) -> Result<Waveform> {
        if target == &self.grid {
            return Ok(self.clone());
        }
        let values = InterpMatrix::new(&self.grid, target)?.apply(&self.values, self.dim)?;
        Ok(Waveform {
            grid: target.clone(),
            dim: self.dim,
            values,
        })
    }

    /// `alpha * self + beta * other` for waveforms on the same grid.
    pub fn lincomb(&self, alpha: f64, other: &Waveform, beta: f64) -> Result<Waveform> {
        if self.grid != other.grid {
            self.grid.check_same_window(&other.grid)?;
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Ok(Waveform {
            grid: self.grid.clone(),
            dim: self.dim,
            values,
        })
    }
}

/// Sparse linear-interpolation operator from a source grid to a target grid,
/// one stencil per target node.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpMatrix {
    rows: Vec<Stencil>,
    ncols: usize,
}

impl InterpMatrix {
    pub fn new(source: &TimeGrid, target: &TimeGrid) -> Result<Self> {
        source.check_same_window(target)?;
        let rows = target
            .points()
            .iter()
            .map(|&t| source.locate(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rows,
            ncols: source.len(),
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn stencils(&self) -> &[Stencil] {
        &self.rows
    }

    /// Nonzero `(column, weight)` pairs of row `i`.
    pub fn row(&self, i: usize) -> Vec<(usize, f64)> {
        let s = self.rows[i];
        if s.is_node() {
            vec![(s.lo, 1.0)]
        } else {
            vec![(s.lo, s.w_lo), (s.hi, s.w_hi)]
        }
    }

    /// Applies the operator to time-major data with block size `dim`.
    pub fn apply(&self, values: &[f64], dim: usize) -> Result<Vec<f64>> {
        if values.len() != self.ncols * dim {
            return Err(Error::DimensionMismatch {
                expected: self.ncols * dim,
                found: values.len(),
            });
        }
        let mut out = vec![0.0; self.rows.len() * dim];
        for (s, block) in self.rows.iter().zip(out.chunks_exact_mut(dim)) {
            s.apply_into(values, dim, block);
        }
        Ok(out)
    }

    /// Scalar-weight matrix (`dim = 1`).
    pub fn to_dense(&self) -> DMatrix<f64> {
        self.to_dense_blocks(1)
    }

    /// Dense matrix acting on time-major vectors with block size `dim`,
    /// i.e. the Kronecker product of the weight matrix with `I_dim`.
    pub fn to_dense_blocks(&self, dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len() * dim, self.ncols * dim);
        for (i, _) in self.rows.iter().enumerate() {
            for (j, w) in self.row(i) {
                for c in 0..dim {
                    m[(i * dim + c, j * dim + c)] = w;
                }
            }
        }
        m
    }
}
