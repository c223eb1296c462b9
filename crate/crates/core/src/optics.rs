//! Illumination spots and synthetic sample phantoms.

use std::fmt;
use std::str::FromStr;

use crate::correlate::Taps;
use crate::error::{Result, SedsError};
use crate::grid::ImageGrid;

/// Relative spread below which a spot counts as constant.
pub const CONSTANCY_EPSILON: f64 = 1e-12;

/// Square illumination spot with odd side length, centred on offset (0, 0).
///
/// Values are raw intensities indexed by offsets `u, v ∈ [-half, half]`
/// (row offset first). They are never normalised.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotKernel {
    size_px: usize,
    values: Vec<f64>,
}

impl SpotKernel {
    /// Builds a spot from row-major values. Rejects even sizes, negative or
    /// non-finite intensities, and all-zero spots.
    pub fn new(size_px: usize, values: Vec<f64>) -> Result<Self> {
        if size_px % 2 == 0 {
            return Err(SedsError::EvenSize(size_px));
        }
        if values.len() != size_px * size_px {
            return Err(SedsError::InvalidGrid(format!(
                "{size_px}x{size_px} spot needs {} values, got {}",
                size_px * size_px,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(SedsError::InvalidGrid(format!("invalid spot intensity {v}")));
        }
        if !values.iter().any(|v| *v > 0.0) {
            return Err(SedsError::InvalidGrid("spot has no positive intensity".into()));
        }
        Ok(Self { size_px, values })
    }

    pub fn size_px(&self) -> usize {
        self.size_px
    }

    pub fn half(&self) -> usize {
        (self.size_px - 1) / 2
    }

    /// Intensity at offset `(u, v)`; panics outside `[-half, half]²`.
    pub fn at(&self, u: isize, v: isize) -> f64 {
        let h = self.half() as isize;
        assert!(u.abs() <= h && v.abs() <= h, "offset ({u},{v}) outside spot");
        self.values[((u + h) as usize) * self.size_px + (v + h) as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Same spot scaled to unit total intensity.
    pub fn normalized(&self) -> SpotKernel {
        let s = self.sum();
        SpotKernel {
            size_px: self.size_px,
            values: self.values.iter().map(|v| v / s).collect(),
        }
    }

    /// Offset-reversed spot, `I'(u, v) = I(-u, -v)`.
    pub fn flipped(&self) -> SpotKernel {
        SpotKernel {
            size_px: self.size_px,
            values: self.values.iter().rev().copied().collect(),
        }
    }

    pub(crate) fn taps(&self) -> Taps {
        Taps::new(self.size_px, self.values.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotDiagnostics {
    pub is_constant: bool,
    pub min_value: f64,
    pub max_value: f64,
    pub sum: f64,
    pub constancy_spread: f64,
}

fn check_size(size_px: usize) -> Result<()> {
    if size_px % 2 == 0 {
        Err(SedsError::EvenSize(size_px))
    } else {
        Ok(())
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(SedsError::NonPositiveParam { name, value })
    }
}

fn from_profile(size_px: usize, profile: impl Fn(isize, isize) -> f64) -> Vec<f64> {
    let h = ((size_px - 1) / 2) as isize;
    (-h..=h)
        .flat_map(|u| (-h..=h).map(move |v| (u, v)))
        .map(|(u, v)| profile(u, v))
        .collect()
}

/// `peak · exp(-(u² + v²) / (2σ²))` on a `size_px × size_px` grid.
///
/// Far taps of a narrow profile on a large grid can underflow to zero.
pub fn make_gaussian_spot(size_px: usize, sigma_px: f64, peak: f64) -> Result<SpotKernel> {
    check_size(size_px)?;
    check_positive("sigma_px", sigma_px)?;
    check_positive("peak", peak)?;
    let denom = 2.0 * sigma_px * sigma_px;
    let values = from_profile(size_px, |u, v| {
        let r2 = (u * u + v * v) as f64;
        peak * (-r2 / denom).exp()
    });
    SpotKernel::new(size_px, values)
}

/// Flat disk: `intensity` where `√(u² + v²) ≤ radius_px`, zero elsewhere.
///
/// The comparison is done on squared distances with a relative slack of
/// 1e-12 so that a radius computed as `half·√2` covers the corners.
pub fn make_disk_spot(size_px: usize, radius_px: f64, intensity: f64) -> Result<SpotKernel> {
    check_size(size_px)?;
    check_positive("radius_px", radius_px)?;
    check_positive("intensity", intensity)?;
    let limit = radius_px * radius_px * (1.0 + 1e-12);
    let values = from_profile(size_px, |u, v| {
        if ((u * u + v * v) as f64) <= limit {
            intensity
        } else {
            0.0
        }
    });
    SpotKernel::new(size_px, values)
}

/// Gaussian stand-in for a diffraction-limited PSF whose Airy disk has the
/// given radius. The Airy first-zero radius is roughly 2.9 Gaussian sigmas.
/// The kernel covers one Airy radius on each side, optionally cropped to
/// `max_size_px` (offsets beyond the image extent never contribute).
pub fn make_conventional_psf(airy_radius_px: f64, max_size_px: Option<usize>) -> Result<SpotKernel> {
    check_positive("airy_radius_px", airy_radius_px)?;
    let mut size = 2 * airy_radius_px.ceil() as usize + 1;
    if let Some(cap) = max_size_px {
        let cap = if cap % 2 == 0 { cap + 1 } else { cap };
        size = size.min(cap.max(1));
    }
    make_gaussian_spot(size, airy_radius_px / 2.9, 1.0)
}

pub fn validate_spot(spot: &SpotKernel) -> SpotDiagnostics {
    let (min_value, max_value) = spot
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let spread = max_value - min_value;
    SpotDiagnostics {
        is_constant: spread < CONSTANCY_EPSILON * max_value,
        min_value,
        max_value,
        sum: spot.sum(),
        constancy_spread: spread,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    UniformRandom,
    Checkerboard,
    Constant,
}

impl FromStr for PhantomKind {
    type Err = SedsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-random" => Ok(Self::UniformRandom),
            "checkerboard" => Ok(Self::Checkerboard),
            "constant" => Ok(Self::Constant),
            other => Err(SedsError::UnknownKind(other.to_string())),
        }
    }
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::UniformRandom => "uniform-random",
            Self::Checkerboard => "checkerboard",
            Self::Constant => "constant",
        })
    }
}

/// SplitMix64 (Steele, Lea & Flood 2014).
///
/// The phantom generator is pinned to this algorithm so that other
/// implementations can reproduce phantoms bit for bit:
///
/// ```text
/// state += 0x9E3779B97F4A7C15
/// z = state
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
/// z = (z ^ (z >> 27)) * 0x94D049BB133111EB
/// return z ^ (z >> 31)
/// ```
///
/// Uniform draws take the top 53 bits: `(z >> 11) · 2⁻⁵³ ∈ [0, 1)`.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Synthetic sample. Uniform-random phantoms fill row-major with
/// `scale · next_f64()` from a [`SplitMix64`] seeded with `seed`;
/// checkerboards put `scale` on pixels with even `i + j`, starting at the
/// top-left corner.
pub fn make_phantom(
    rows: usize,
    cols: usize,
    kind: PhantomKind,
    seed: u64,
    scale: f64,
) -> Result<ImageGrid> {
    check_positive("scale", scale)?;
    crate::grid::check_shape(rows, cols, rows.saturating_mul(cols))?;
    let values = match kind {
        PhantomKind::UniformRandom => {
            let mut rng = SplitMix64::new(seed);
            (0..rows * cols).map(|_| scale * rng.next_f64()).collect()
        }
        PhantomKind::Checkerboard => (0..rows * cols)
            .map(|n| if (n / cols + n % cols) % 2 == 0 { scale } else { 0.0 })
            .collect(),
        PhantomKind::Constant => vec![scale; rows * cols],
    };
    ImageGrid::new(rows, cols, values)
}
