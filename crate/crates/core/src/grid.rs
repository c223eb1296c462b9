//! Row-major 2-D real grids.
//!
//! All indices are 0-based. Pixel `(i, j)` here is pixel `(i + 1, j + 1)` in
//! the 1-based notation used when describing scans by hand; flattening is
//! row-major, so pixel `(i, j)` maps to `i * cols + j`.

use crate::error::{Result, SedsError};

/// A grid of optical-property values: a sample phantom, a blurred or
/// coarse-scanned view of one, or a reconstruction.
///
/// Grids built with [`ImageGrid::new`] are nonnegative. Reconstructions are
/// built with [`ImageGrid::from_solution`], which only requires finiteness:
/// solving the plain linear system can leave tiny negative rounding residue
/// that is reported as-is.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        let grid = Self::from_solution(rows, cols, values)?;
        if let Some(v) = grid.values.iter().find(|v| **v < 0.0) {
            return Err(SedsError::InvalidGrid(format!("negative value {v}")));
        }
        Ok(grid)
    }

    pub fn from_solution(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(rows, cols, values.len())?;
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(SedsError::InvalidGrid(format!("non-finite value {v}")));
        }
        Ok(Self { rows, cols, values })
    }

    /// Grid filled with a single nonnegative value.
    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        check_shape(rows, cols, rows.saturating_mul(cols))?;
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    /// Row-major values; this is the flattened unknown vector `x`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

pub(crate) fn check_shape(rows: usize, cols: usize, len: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(SedsError::InvalidGrid(format!(
            "dimensions must be positive, got {rows}x{cols}"
        )));
    }
    match rows.checked_mul(cols) {
        Some(n) if n == len => Ok(()),
        _ => Err(SedsError::InvalidGrid(format!(
            "{rows}x{cols} grid needs {} values, got {len}",
            rows.saturating_mul(cols)
        ))),
    }
}
