//! Filtering baseline: deconvolve a scan that also covers the peripheral
//! frame, in the frequency domain.
//!
//! The footprint grid is a correlation of the sample with the spot, which is
//! a convolution with the offset-reversed spot. Both are zero-padded to a
//! power-of-two grid at least `R + 2m + k` wide, large enough that the
//! circular convolution on the padded grid equals the linear one. The
//! sample spectrum is recovered bin by bin and the ROI is cropped out.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Result, SedsError};
use crate::grid::ImageGrid;
use crate::io::format_f64;
use crate::metrics::mean_abs_diff;
use crate::optics::SpotKernel;
use crate::scan::{footprint_count, scan_dds, scan_seds, BoundaryCondition, MeasurementGrid, ScanMode};
use crate::solve::{solve, Method, SolverConfig, DIRECT_THRESHOLD};
use crate::system::{boundary_contribution, build_system, Representation};

pub const DEFAULT_INVERSE_EPS: f64 = 1e-8;
pub const DEFAULT_WIENER_K: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Inverse,
    Wiener,
}

impl FromStr for FilterKind {
    type Err = SedsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse" => Ok(Self::Inverse),
            "wiener" => Ok(Self::Wiener),
            other => Err(SedsError::UnknownKind(other.to_string())),
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Inverse => "inverse",
            Self::Wiener => "wiener",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub kind: FilterKind,
    /// Inverse filter: bins with `|H| < eps · max|H|` are zeroed.
    pub eps: f64,
    /// Wiener noise-to-signal constant in `conj(H) / (|H|² + K)`.
    pub k: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self::inverse(DEFAULT_INVERSE_EPS)
    }
}

impl FilterConfig {
    pub fn inverse(eps: f64) -> Self {
        Self {
            kind: FilterKind::Inverse,
            eps,
            k: DEFAULT_WIENER_K,
        }
    }

    pub fn wiener(k: f64) -> Self {
        Self {
            kind: FilterKind::Wiener,
            eps: DEFAULT_INVERSE_EPS,
            k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            FilterKind::Inverse if !(self.eps > 0.0) => Err(SedsError::NonPositiveParam {
                name: "eps",
                value: self.eps,
            }),
            FilterKind::Wiener if !(self.k >= 0.0 && self.k.is_finite()) => {
                Err(SedsError::InvalidGrid(format!("Wiener K must be nonnegative, got {}", self.k)))
            }
            _ => Ok(()),
        }
    }
}

/// Padded transform size along one axis.
pub fn padded_len(roi: usize, margin: usize, spot: usize) -> usize {
    (roi + 2 * margin + spot).next_power_of_two()
}

/// In-place 2-D DFT of a row-major `rows × cols` buffer.
fn fft2(data: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(cols), planner.plan_fft_inverse(rows))
    } else {
        (planner.plan_fft_forward(cols), planner.plan_fft_forward(rows))
    };
    row_fft.process(data);
    let mut column = vec![Complex64::default(); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = data[r * cols + c];
        }
        col_fft.process(&mut column);
        for r in 0..rows {
            data[r * cols + c] = column[r];
        }
    }
}

/// Spectrum of the offset-reversed spot placed with its centre at the origin
/// of a `rows × cols` periodic grid.
fn kernel_spectrum(spot: &SpotKernel, rows: usize, cols: usize) -> Vec<Complex64> {
    let mut buf = vec![Complex64::default(); rows * cols];
    let h = spot.half() as isize;
    for u in -h..=h {
        for v in -h..=h {
            // K(w) = I(-w)
            let r = (-u).rem_euclid(rows as isize) as usize;
            let c = (-v).rem_euclid(cols as isize) as usize;
            buf[r * cols + c] += spot.at(u, v);
        }
    }
    fft2(&mut buf, rows, cols, false);
    buf
}

fn apply_filter(signal: &mut [Complex64], kernel: &[Complex64], config: &FilterConfig) {
    match config.kind {
        FilterKind::Inverse => {
            let peak = kernel.iter().map(|h| h.norm()).fold(0.0, f64::max);
            let cutoff = config.eps * peak;
            for (s, h) in signal.iter_mut().zip(kernel) {
                *s = if h.norm() < cutoff || h.norm() == 0.0 {
                    Complex64::default()
                } else {
                    *s / h
                };
            }
        }
        FilterKind::Wiener => {
            for (s, h) in signal.iter_mut().zip(kernel) {
                let denom = h.norm_sqr() + config.k;
                *s = if denom == 0.0 {
                    Complex64::default()
                } else {
                    *s * h.conj() / denom
                };
            }
        }
    }
}

/// Recovers the ROI from a DDS scan by inverse or Wiener filtering.
///
/// A constant boundary's known contribution is subtracted first, so the
/// filter always sees a zero-boundary scan.
pub fn dds_deconvolve(s: &MeasurementGrid, spot: &SpotKernel, config: &FilterConfig) -> Result<ImageGrid> {
    config.validate()?;
    if s.mode() != ScanMode::Dds {
        return Err(SedsError::ModeMismatch {
            expected: ScanMode::Dds.as_str(),
            got: s.mode().as_str(),
        });
    }
    if s.spot_size_px() != spot.size_px() {
        return Err(SedsError::SpotMismatch {
            measured: s.spot_size_px(),
            kernel: spot.size_px(),
        });
    }
    let m = s.margin_px();
    if m < spot.half() {
        return Err(SedsError::MarginTooSmall {
            margin: m,
            half: spot.half(),
        });
    }
    let (roi_r, roi_c) = s.roi_dims();
    let (pr, pc) = (
        padded_len(roi_r, m, spot.size_px()),
        padded_len(roi_c, m, spot.size_px()),
    );

    let known = boundary_contribution(
        spot,
        s.bc(),
        (-(m as isize), -(m as isize)),
        (roi_r, roi_c),
        (s.rows(), s.cols()),
    );
    let mut signal = vec![Complex64::default(); pr * pc];
    for i in 0..s.rows() {
        for j in 0..s.cols() {
            let idx = i * s.cols() + j;
            signal[i * pc + j] = Complex64::new(s.values()[idx] - known[idx], 0.0);
        }
    }
    fft2(&mut signal, pr, pc, false);
    let kernel = kernel_spectrum(spot, pr, pc);
    apply_filter(&mut signal, &kernel, config);
    fft2(&mut signal, pr, pc, true);

    let scale = 1.0 / (pr * pc) as f64;
    let values = (0..roi_r)
        .flat_map(|i| (0..roi_c).map(move |j| (i + m) * pc + j + m))
        .map(|idx| signal[idx].re * scale)
        .collect();
    ImageGrid::from_solution(roi_r, roi_c, values)
}

/// Side-by-side run of both recovery routes on the same sample.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub seds_footprints: usize,
    pub dds_footprints: usize,
    pub seds_mean_abs_diff: f64,
    pub dds_mean_abs_diff: f64,
    pub seds_seconds: f64,
    pub dds_seconds: f64,
    pub seds_image: ImageGrid,
    pub dds_image: ImageGrid,
}

impl ComparisonReport {
    pub fn footprint_ratio(&self) -> f64 {
        self.dds_footprints as f64 / self.seds_footprints as f64
    }

    /// Wall times vary between runs, so they are only included on request.
    pub fn to_kv(&self, include_timing: bool) -> Vec<(&'static str, String)> {
        let mut kv = vec![
            ("seds_footprints", self.seds_footprints.to_string()),
            ("dds_footprints", self.dds_footprints.to_string()),
            ("footprint_ratio", format_f64(self.footprint_ratio())),
            ("seds_mean_abs_diff", format_f64(self.seds_mean_abs_diff)),
            ("dds_mean_abs_diff", format_f64(self.dds_mean_abs_diff)),
        ];
        if include_timing {
            kv.push(("seds_seconds", format!("{:.6}", self.seds_seconds)));
            kv.push(("dds_seconds", format!("{:.6}", self.dds_seconds)));
        }
        kv
    }
}

/// Explicit storage when the direct solver would be used, matrix-free
/// otherwise.
pub fn preferred_representation(n: usize, method: Method) -> Representation {
    match method {
        Method::Iterative => Representation::Implicit,
        Method::Direct => Representation::Explicit,
        Method::Auto if n <= DIRECT_THRESHOLD => Representation::Explicit,
        Method::Auto => Representation::Implicit,
    }
}

/// Scans `e` both ways under a zero boundary and recovers it with each
/// method.
pub fn compare_methods(
    e: &ImageGrid,
    spot: &SpotKernel,
    margin_px: usize,
    solver: &SolverConfig,
    filter: &FilterConfig,
) -> Result<ComparisonReport> {
    let bc = BoundaryCondition::Zero;
    let (rows, cols) = e.dims();
    let k = spot.size_px();

    let t0 = Instant::now();
    let measured = scan_seds(e, spot, bc);
    let repr = preferred_representation(rows * cols, solver.method);
    let system = build_system(&measured, spot, bc, repr)?;
    let (seds_image, _) = solve(&system, solver)?;
    let seds_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let measured = scan_dds(e, spot, bc, margin_px);
    let dds_image = dds_deconvolve(&measured, spot, filter)?;
    let dds_seconds = t1.elapsed().as_secs_f64();

    Ok(ComparisonReport {
        seds_footprints: footprint_count(ScanMode::Seds, rows, cols, k, 0),
        dds_footprints: footprint_count(ScanMode::Dds, rows, cols, k, margin_px),
        seds_mean_abs_diff: mean_abs_diff(e, &seds_image)?,
        dds_mean_abs_diff: mean_abs_diff(e, &dds_image)?,
        seds_seconds,
        dds_seconds,
        seds_image,
        dds_image,
    })
}
