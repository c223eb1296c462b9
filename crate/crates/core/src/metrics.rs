//! Pixel-difference metrics between a reference image and a reconstruction.

use crate::error::{Result, SedsError};
use crate::grid::ImageGrid;
use crate::io::format_f64;

fn check_dims(a: &ImageGrid, b: &ImageGrid) -> Result<()> {
    if a.dims() == b.dims() {
        Ok(())
    } else {
        Err(SedsError::DimensionMismatch {
            left: a.dims(),
            right: b.dims(),
        })
    }
}

/// Averaged absolute pixel difference, summed in row-major order.
pub fn mean_abs_diff(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    check_dims(a, b)?;
    let total = a
        .values()
        .iter()
        .zip(b.values())
        .fold(0.0, |acc, (x, y)| acc + (x - y).abs());
    Ok(total / a.len() as f64)
}

pub fn max_abs_diff(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    check_dims(a, b)?;
    Ok(a.values()
        .iter()
        .zip(b.values())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs())))
}

/// `100 · mean_abs_diff / mean(reference)`.
pub fn relative_error_percent(reference: &ImageGrid, other: &ImageGrid) -> Result<f64> {
    let mad = mean_abs_diff(reference, other)?;
    let mean = reference.mean();
    if mean <= 0.0 {
        return Err(SedsError::ZeroMeanReference);
    }
    Ok(100.0 * mad / mean)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub mean_abs_diff: f64,
    pub relative_to_mean_percent: f64,
    pub max_abs_diff: f64,
}

impl MetricsReport {
    /// Metrics of `recovered` against `reference`. A zero-mean reference
    /// reports an infinite relative error rather than failing.
    pub fn compare(reference: &ImageGrid, recovered: &ImageGrid) -> Result<Self> {
        let relative = match relative_error_percent(reference, recovered) {
            Err(SedsError::ZeroMeanReference) => f64::INFINITY,
            other => other?,
        };
        Ok(Self {
            mean_abs_diff: mean_abs_diff(reference, recovered)?,
            relative_to_mean_percent: relative,
            max_abs_diff: max_abs_diff(reference, recovered)?,
        })
    }

    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("mean_abs_diff", format_f64(self.mean_abs_diff)),
            ("relative_to_mean_percent", format_f64(self.relative_to_mean_percent)),
            ("max_abs_diff", format_f64(self.max_abs_diff)),
        ]
    }
}
