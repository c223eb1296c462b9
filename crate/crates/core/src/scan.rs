//! Dense-scan measurement simulators.
//!
//! A footprint centred on pixel `(i, j)` records
//! `S(i, j) = Σ_{u,v} I(u, v) · Ē(i + u, j + v)`, where `Ē` is the sample
//! extended outside the ROI by the boundary condition. SEDS places one
//! footprint on every ROI pixel; DDS additionally covers a peripheral frame
//! of `margin_px` pixels on each side.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::correlate::{correlate, footprint, Source};
use crate::error::{Result, SedsError};
use crate::grid::{check_shape, ImageGrid};
use crate::optics::SpotKernel;

/// Known optical property of the peripheral areas around the ROI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryCondition {
    Zero,
    Constant(f64),
}

impl BoundaryCondition {
    pub fn constant(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Self::Constant(value))
        } else {
            Err(SedsError::InvalidGrid(format!(
                "boundary constant must be finite and nonnegative, got {value}"
            )))
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant(c) => *c,
        }
    }
}

impl Default for BoundaryCondition {
    fn default() -> Self {
        Self::Zero
    }
}

/// Parses `zero` or `const:<value>`.
impl FromStr for BoundaryCondition {
    type Err = SedsError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "zero" {
            return Ok(Self::Zero);
        }
        let value = s
            .strip_prefix("const:")
            .ok_or_else(|| SedsError::Parse(format!("boundary `{s}`: expected zero or const:<v>")))?
            .parse::<f64>()
            .map_err(|e| SedsError::Parse(format!("boundary `{s}`: {e}")))?;
        Self::constant(value)
    }
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => f.write_str("zero"),
            Self::Constant(c) => write!(f, "const:{c:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    Seds,
    Dds,
}

impl ScanMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Seds => "seds",
            Self::Dds => "dds",
        }
    }
}

impl FromStr for ScanMode {
    type Err = SedsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seds" => Ok(Self::Seds),
            "dds" => Ok(Self::Dds),
            other => Err(SedsError::UnknownKind(other.to_string())),
        }
    }
}

impl fmt::Display for ScanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scan sums `S` on the footprint grid plus the geometry that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementGrid {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    mode: ScanMode,
    margin_px: usize,
    spot_size_px: usize,
    bc: BoundaryCondition,
}

impl MeasurementGrid {
    pub fn new(
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        mode: ScanMode,
        margin_px: usize,
        spot_size_px: usize,
        bc: BoundaryCondition,
    ) -> Result<Self> {
        check_shape(rows, cols, values.len())?;
        if spot_size_px % 2 == 0 {
            return Err(SedsError::EvenSize(spot_size_px));
        }
        if mode == ScanMode::Seds && margin_px != 0 {
            return Err(SedsError::InvalidGrid("SEDS measurements have no margin".into()));
        }
        if rows <= 2 * margin_px || cols <= 2 * margin_px {
            return Err(SedsError::InvalidGrid(format!(
                "{rows}x{cols} footprint grid cannot hold a margin of {margin_px}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SedsError::InvalidGrid("non-finite measurement".into()));
        }
        Ok(Self {
            rows,
            cols,
            values,
            mode,
            margin_px,
            spot_size_px,
            bc,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Size of the region of interest the scan was taken over.
    pub fn roi_dims(&self) -> (usize, usize) {
        (self.rows - 2 * self.margin_px, self.cols - 2 * self.margin_px)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn mode(&self) -> ScanMode {
        self.mode
    }

    pub fn margin_px(&self) -> usize {
        self.margin_px
    }

    pub fn spot_size_px(&self) -> usize {
        self.spot_size_px
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    /// The ROI-centred block, which for a DDS scan equals the SEDS scan.
    pub fn central_block(&self) -> Vec<f64> {
        let (r, c) = self.roi_dims();
        let m = self.margin_px;
        (0..r)
            .flat_map(|i| (0..c).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i + m, j + m))
            .collect()
    }

    /// Copy with i.i.d. Gaussian noise of standard deviation `sigma` added to
    /// every sum, drawn from ChaCha8 seeded with `seed`.
    pub fn with_noise(&self, sigma: f64, seed: u64) -> Result<Self> {
        let invalid = SedsError::NonPositiveParam {
            name: "noise_sigma",
            value: sigma,
        };
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid);
        }
        if sigma == 0.0 {
            return Ok(self.clone());
        }
        let normal = Normal::new(0.0, sigma).map_err(|_| invalid)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        for v in &mut out.values {
            *v += normal.sample(&mut rng);
        }
        Ok(out)
    }
}

fn source(e: &ImageGrid, bc: BoundaryCondition) -> Source<'_> {
    Source {
        values: e.values(),
        rows: e.rows(),
        cols: e.cols(),
        fill: bc.value(),
    }
}

/// One footprint per ROI pixel.
pub fn scan_seds(e: &ImageGrid, spot: &SpotKernel, bc: BoundaryCondition) -> MeasurementGrid {
    let (rows, cols) = e.dims();
    let values = correlate(source(e, bc), &spot.taps(), (0, 0), rows, cols);
    MeasurementGrid {
        rows,
        cols,
        values,
        mode: ScanMode::Seds,
        margin_px: 0,
        spot_size_px: spot.size_px(),
        bc,
    }
}

/// Footprints over the ROI and a `margin_px` frame around it.
pub fn scan_dds(
    e: &ImageGrid,
    spot: &SpotKernel,
    bc: BoundaryCondition,
    margin_px: usize,
) -> MeasurementGrid {
    let (rows, cols) = (e.rows() + 2 * margin_px, e.cols() + 2 * margin_px);
    let m = margin_px as isize;
    let values = correlate(source(e, bc), &spot.taps(), (-m, -m), rows, cols);
    MeasurementGrid {
        rows,
        cols,
        values,
        mode: ScanMode::Dds,
        margin_px,
        spot_size_px: spot.size_px(),
        bc,
    }
}

/// Coarse scan with step equal to the spot size, as a conventional
/// point-scanning super-resolution microscope would take it. Footprints are
/// tiled from the ROI's top-left corner; the peripheral areas are dark.
pub fn scan_sted(e: &ImageGrid, spot: &SpotKernel) -> Result<ImageGrid> {
    let k = spot.size_px();
    let (rows, cols) = e.dims();
    if k > rows.min(cols) {
        return Err(SedsError::SpotLargerThanRoi {
            spot: k,
            rows,
            cols,
        });
    }
    let (out_rows, out_cols) = (rows / k, cols / k);
    let taps = spot.taps();
    let src = source(e, BoundaryCondition::Zero);
    let h = spot.half();
    let values = (0..out_rows)
        .flat_map(|p| (0..out_cols).map(move |q| (p, q)))
        .map(|(p, q)| footprint(src, &taps, (p * k + h) as isize, (q * k + h) as isize))
        .collect();
    ImageGrid::from_solution(out_rows, out_cols, values)
}

/// Wide-field image: the sample correlated with the unit-sum PSF, dark
/// surroundings, same size as the sample.
pub fn blur_conventional(e: &ImageGrid, psf: &SpotKernel) -> ImageGrid {
    let (rows, cols) = e.dims();
    let values = correlate(
        source(e, BoundaryCondition::Zero),
        &psf.normalized().taps(),
        (0, 0),
        rows,
        cols,
    );
    ImageGrid::from_solution(rows, cols, values).expect("finite blur of finite inputs")
}

/// Number of spot placements needed to cover an `r × c` ROI.
pub fn footprint_count(mode: ScanMode, rows: usize, cols: usize, _spot_size_px: usize, margin_px: usize) -> usize {
    match mode {
        ScanMode::Seds => rows * cols,
        ScanMode::Dds => (rows + 2 * margin_px) * (cols + 2 * margin_px),
    }
}

/// Default DDS frame width for a spot of side `k`: `k − 1` per side.
pub fn default_dds_margin(spot_size_px: usize) -> usize {
    spot_size_px.saturating_sub(1)
}
