//! Dense intensity grids with retention-time axis calibration.
//!
//! Columns run along the first chromatographic dimension (minutes) and rows
//! along the second (seconds). Row 0 holds the lowest second-dimension
//! retention time. Pixel `(r, c)` has its centre at
//! `(axis1_origin + c * axis1_step, axis2_origin + r * axis2_step)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Affine map from pixel indices to retention coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AxisCalibration<T: Scalar> {
    pub axis1_origin: T,
    pub axis1_step: T,
    pub axis2_origin: T,
    pub axis2_step: T,
}

impl<T: Scalar> Default for AxisCalibration<T> {
    /// Pixel units: origin 0, step 1 on both axes.
    fn default() -> Self {
        Self::pixel_units()
    }
}

impl<T: Scalar> AxisCalibration<T> {
    pub fn pixel_units() -> Self {
        AxisCalibration {
            axis1_origin: T::zero(),
            axis1_step: T::one(),
            axis2_origin: T::zero(),
            axis2_step: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.axis1_origin,
            self.axis1_step,
            self.axis2_origin,
            self.axis2_step,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("axis calibration is not finite".into()));
        }
        if self.axis1_step <= T::zero() || self.axis2_step <= T::zero() {
            return Err(Error::InvalidGrid("axis steps must be positive".into()));
        }
        Ok(())
    }

    /// Retention coordinates `[axis1, axis2]` of the centre of pixel `(row, col)`.
    #[inline]
    pub fn to_retention(&self, row: T, col: T) -> [T; 2] {
        [
            self.axis1_origin + col * self.axis1_step,
            self.axis2_origin + row * self.axis2_step,
        ]
    }

    /// Continuous `(row, col)` pixel position of a retention coordinate.
    #[inline]
    pub fn to_pixel(&self, p: [T; 2]) -> (T, T) {
        (
            (p[1] - self.axis2_origin) / self.axis2_step,
            (p[0] - self.axis1_origin) / self.axis1_step,
        )
    }

    /// Area of one pixel in retention units (minutes x seconds).
    pub fn pixel_area(&self) -> T {
        self.axis1_step * self.axis2_step
    }
}

/// Row-major 2D grid of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T: Scalar> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
    axes: AxisCalibration<T>,
}

impl<T: Scalar> Grid<T> {
    /// Builds a grid, checking shape (at least 2x2), finiteness and calibration.
    pub fn new(rows: usize, cols: usize, values: Vec<T>, axes: AxisCalibration<T>) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidGrid(format!(
                "grid must be at least 2x2, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::InvalidGrid(format!(
                "expected {} values for {rows}x{cols}, got {}",
                rows * cols,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid values"));
        }
        axes.validate()?;
        Ok(Grid {
            rows,
            cols,
            values,
            axes,
        })
    }

    /// Grid from nested rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<T>], axes: AxisCalibration<T>) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
            return Err(Error::InvalidGrid(format!(
                "row {i} has {} values, expected {ncols}",
                rows[i].len()
            )));
        }
        Grid::new(rows.len(), ncols, rows.concat(), axes)
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        axes: AxisCalibration<T>,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Grid::new(rows, cols, values, axes)
    }

    /// Same geometry, all values set to `v`.
    pub fn filled_like(&self, v: T) -> Self {
        Grid {
            rows: self.rows,
            cols: self.cols,
            values: vec![v; self.values.len()],
            axes: self.axes,
        }
    }

    /// Internal constructor for buffers known to satisfy the invariants.
    pub(crate) fn from_parts(
        rows: usize,
        cols: usize,
        values: Vec<T>,
        axes: AxisCalibration<T>,
    ) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Grid {
            rows,
            cols,
            values,
            axes,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn axes(&self) -> &AxisCalibration<T> {
        &self.axes
    }

    pub fn with_axes(mut self, axes: AxisCalibration<T>) -> Result<Self> {
        axes.validate()?;
        self.axes = axes;
        Ok(self)
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: T) {
        self.values[row * self.cols + col] = v;
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    /// Retention coordinates of the centre of pixel `(row, col)`.
    #[inline]
    pub fn retention_of(&self, row: usize, col: usize) -> [T; 2] {
        self.axes
            .to_retention(T::from_usize_lossy(row), T::from_usize_lossy(col))
    }

    /// Inclusive retention-coordinate bounds `([min1, min2], [max1, max2])`
    /// spanned by the pixel centres.
    pub fn retention_bounds(&self) -> ([T; 2], [T; 2]) {
        let lo = self.retention_of(0, 0);
        let hi = self.retention_of(self.rows - 1, self.cols - 1);
        (lo, hi)
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Grid {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
            axes: self.axes,
        }
    }

    pub fn same_shape(&self, other: &Grid<T>) -> bool {
        self.shape() == other.shape()
    }

    /// Checks the intensity-grid invariant: every value is non-negative.
    pub fn validate_intensities(&self) -> Result<()> {
        if let Some(i) = self.values.iter().position(|&v| v < T::zero()) {
            return Err(Error::InvalidGrid(format!(
                "negative intensity at row {}, column {}",
                i / self.cols,
                i % self.cols
            )));
        }
        Ok(())
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn pixel_area(&self) -> T {
        self.axes.pixel_area()
    }
}
