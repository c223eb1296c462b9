//! Dense-scan super-resolution microscopy simulation and recovery.
//!
//! A sample (the ROI, surrounded by peripheral areas of known optical
//! property) is scanned with an illumination spot at a step of one pixel,
//! far smaller than the spot itself. Each footprint yields one sum `S(i, j)`
//! of the sample weighted by the spot. Scanning only the ROI gives as many
//! equations as unknown pixels; [`system`] assembles them and [`solve`]
//! recovers the sample. [`dds`] implements the filtering alternative, which
//! must also scan the peripheral frame.
//!
//! ```
//! use seds::prelude::*;
//!
//! let sample = make_phantom(8, 8, PhantomKind::UniformRandom, 7, 255.0).unwrap();
//! let spot = make_gaussian_spot(3, 1.0, 1.0).unwrap();
//! let scan = scan_seds(&sample, &spot, BoundaryCondition::Zero);
//! let system = build_system(&scan, &spot, BoundaryCondition::Zero, Representation::Explicit).unwrap();
//! let (recovered, _) = solve(&system, &SolverConfig::default()).unwrap();
//! assert!(mean_abs_diff(&sample, &recovered).unwrap() < 1e-10);
//! ```

mod correlate;

pub mod dds;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod optics;
pub mod scan;
pub mod solve;
pub mod system;

pub use error::{Result, SedsError};

pub mod prelude {
    pub use crate::dds::{compare_methods, dds_deconvolve, ComparisonReport, FilterConfig, FilterKind};
    pub use crate::error::{Result, SedsError};
    pub use crate::grid::ImageGrid;
    pub use crate::metrics::{max_abs_diff, mean_abs_diff, relative_error_percent, MetricsReport};
    pub use crate::optics::{
        make_disk_spot, make_gaussian_spot, make_phantom, validate_spot, PhantomKind, SpotDiagnostics, SpotKernel,
    };
    pub use crate::scan::{
        blur_conventional, footprint_count, scan_dds, scan_seds, scan_sted, BoundaryCondition, MeasurementGrid,
        ScanMode,
    };
    pub use crate::solve::{residual_norm, solve, solve_direct, solve_iterative, Method, SolveReport, SolverConfig};
    pub use crate::system::{apply_operator, assemble_explicit, build_system, LinearSystem, Representation};
}
