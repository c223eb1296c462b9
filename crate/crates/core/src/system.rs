//! The linear system `A x = b` implied by a SEDS scan.
//!
//! Row `r = i·C + j` is the footprint centred on ROI pixel `(i, j)` and
//! column `i'·C + j'` is the unknown pixel `(i', j')`, so the rows appear in
//! the scan order `S(1,1), …, S(1,C), …, S(R,C)`. Entry `(r, col(i+u, j+v))`
//! holds `I(u, v)`. Targets outside the ROI carry the known boundary value,
//! so their contribution is moved to the right-hand side and `A` itself does
//! not depend on the boundary condition.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::correlate::{correlate, Source, Taps};
use crate::error::{Result, SedsError};
use crate::optics::SpotKernel;
use crate::scan::{BoundaryCondition, MeasurementGrid, ScanMode};

/// Largest `R·C` for which explicit assembly is allowed by default.
pub const EXPLICIT_ASSEMBLY_CAP: usize = 20_000;

/// Square sparse matrix in compressed-row form, columns ascending per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl ExplicitMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |k| vals[k])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .into_par_iter()
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).fold(0.0, |acc, (c, a)| acc + a * x[*c])
            })
            .collect()
    }

    pub fn matvec_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (r, yr) in y.iter().enumerate() {
            let (cols, vals) = self.row(r);
            for (c, a) in cols.iter().zip(vals) {
                out[*c] += a * yr;
            }
        }
        out
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.n * self.n];
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (c, a) in cols.iter().zip(vals) {
                dense[r * self.n + c] = *a;
            }
        }
        dense
    }

    /// Lower and upper bandwidth of the sparsity pattern.
    pub fn bandwidths(&self) -> (usize, usize) {
        (0..self.n).fold((0, 0), |(lo, hi), r| {
            let (cols, _) = self.row(r);
            match (cols.first(), cols.last()) {
                (Some(&first), Some(&last)) => {
                    (lo.max(r.saturating_sub(first)), hi.max(last.saturating_sub(r)))
                }
                _ => (lo, hi),
            }
        })
    }

    /// Coordinate listing, one `row col value` triple per line, 0-based,
    /// sorted by row then column.
    pub fn write_coo<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (c, a) in cols.iter().zip(vals) {
                writeln!(w, "{r} {c} {}", crate::io::format_f64(*a))?;
            }
        }
        Ok(())
    }
}

/// `A` applied on the fly as a zero-boundary correlation with the spot.
#[derive(Debug, Clone)]
pub struct ImplicitOperator {
    rows: usize,
    cols: usize,
    spot_size_px: usize,
    taps: Taps,
    flipped: Taps,
}

impl ImplicitOperator {
    pub fn new(spot: &SpotKernel, rows: usize, cols: usize) -> Self {
        let taps = spot.taps();
        let flipped = taps.flipped();
        Self {
            rows,
            cols,
            spot_size_px: spot.size_px(),
            taps,
            flipped,
        }
    }

    pub fn spot_size_px(&self) -> usize {
        self.spot_size_px
    }

    fn run(&self, taps: &Taps, x: &[f64]) -> Vec<f64> {
        let src = Source {
            values: x,
            rows: self.rows,
            cols: self.cols,
            fill: 0.0,
        };
        correlate(src, taps, (0, 0), self.rows, self.cols)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.run(&self.taps, x)
    }

    /// `Aᵀ y`: correlation with the offset-reversed spot.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        self.run(&self.flipped, y)
    }
}

#[derive(Debug, Clone)]
pub enum Operator {
    Explicit(ExplicitMatrix),
    Implicit(ImplicitOperator),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Representation {
    #[default]
    Explicit,
    Implicit,
}

impl FromStr for Representation {
    type Err = SedsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(Self::Explicit),
            "implicit" => Ok(Self::Implicit),
            other => Err(SedsError::UnknownKind(other.to_string())),
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Explicit => "explicit",
            Self::Implicit => "implicit",
        })
    }
}

#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub operator: Operator,
    pub rhs: Vec<f64>,
    pub roi_rows: usize,
    pub roi_cols: usize,
}

impl LinearSystem {
    pub fn n(&self) -> usize {
        self.roi_rows * self.roi_cols
    }

    pub fn is_explicit(&self) -> bool {
        matches!(self.operator, Operator::Explicit(_))
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        Ok(match &self.operator {
            Operator::Explicit(m) => m.matvec(x),
            Operator::Implicit(op) => op.apply(x),
        })
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_len(y.len())?;
        Ok(match &self.operator {
            Operator::Explicit(m) => m.matvec_transpose(y),
            Operator::Implicit(op) => op.apply_transpose(y),
        })
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got == self.n() {
            Ok(())
        } else {
            Err(SedsError::LengthMismatch {
                expected: self.n(),
                got,
            })
        }
    }
}

pub fn assemble_explicit(spot: &SpotKernel, rows: usize, cols: usize) -> Result<ExplicitMatrix> {
    assemble_explicit_with_cap(spot, rows, cols, EXPLICIT_ASSEMBLY_CAP)
}

pub fn assemble_explicit_with_cap(
    spot: &SpotKernel,
    rows: usize,
    cols: usize,
    cap: usize,
) -> Result<ExplicitMatrix> {
    let n = rows.checked_mul(cols).unwrap_or(usize::MAX);
    if n > cap {
        return Err(SedsError::DimensionOverflow { n, cap });
    }
    let h = spot.half() as isize;
    let (r_i, c_i) = (rows as isize, cols as isize);
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for i in 0..r_i {
        for j in 0..c_i {
            // Row-major over (u, v) gives ascending column indices.
            for u in (-h).max(-i)..=h.min(r_i - 1 - i) {
                for v in (-h).max(-j)..=h.min(c_i - 1 - j) {
                    let w = spot.at(u, v);
                    if w != 0.0 {
                        col_idx.push(((i + u) * c_i + j + v) as usize);
                        values.push(w);
                    }
                }
            }
            row_ptr.push(col_idx.len());
        }
    }
    Ok(ExplicitMatrix {
        n,
        row_ptr,
        col_idx,
        values,
    })
}

/// Matrix-free `A x` for a `rows × cols` ROI.
pub fn apply_operator(spot: &SpotKernel, rows: usize, cols: usize, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != rows * cols {
        return Err(SedsError::LengthMismatch {
            expected: rows * cols,
            got: x.len(),
        });
    }
    Ok(ImplicitOperator::new(spot, rows, cols).apply(x))
}

/// Known contribution of the peripheral areas to each footprint,
/// `c · Σ I(u, v)` over taps whose target lies outside the ROI.
pub fn boundary_contribution(
    spot: &SpotKernel,
    bc: BoundaryCondition,
    origin: (isize, isize),
    roi: (usize, usize),
    out: (usize, usize),
) -> Vec<f64> {
    if bc.value() == 0.0 {
        return vec![0.0; out.0 * out.1];
    }
    let zeros = vec![0.0; roi.0 * roi.1];
    let src = Source {
        values: &zeros,
        rows: roi.0,
        cols: roi.1,
        fill: bc.value(),
    };
    correlate(src, &spot.taps(), origin, out.0, out.1)
}

pub fn build_system(
    s: &MeasurementGrid,
    spot: &SpotKernel,
    bc: BoundaryCondition,
    representation: Representation,
) -> Result<LinearSystem> {
    if s.mode() != ScanMode::Seds {
        return Err(SedsError::ModeMismatch {
            expected: ScanMode::Seds.as_str(),
            got: s.mode().as_str(),
        });
    }
    if s.spot_size_px() != spot.size_px() {
        return Err(SedsError::SpotMismatch {
            measured: s.spot_size_px(),
            kernel: spot.size_px(),
        });
    }
    let (rows, cols) = (s.rows(), s.cols());
    let known = boundary_contribution(spot, bc, (0, 0), (rows, cols), (rows, cols));
    let rhs = s.values().iter().zip(&known).map(|(s, k)| s - k).collect();
    let operator = match representation {
        Representation::Explicit => Operator::Explicit(assemble_explicit(spot, rows, cols)?),
        Representation::Implicit => Operator::Implicit(ImplicitOperator::new(spot, rows, cols)),
    };
    Ok(LinearSystem {
        operator,
        rhs,
        roi_rows: rows,
        roi_cols: cols,
    })
}
