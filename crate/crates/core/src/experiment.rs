//! End-to-end simulation runs: build a phantom and spot, scan, recover, and
//! write every intermediate grid plus a metrics report.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dds::{dds_deconvolve, preferred_representation, FilterConfig};
use crate::error::{Result, SedsError};
use crate::grid::ImageGrid;
use crate::io::{self, format_f64, format_kv};
use crate::metrics::{mean_abs_diff, MetricsReport};
use crate::optics::{make_conventional_psf, make_disk_spot, make_gaussian_spot, make_phantom, PhantomKind, SpotKernel};
use crate::scan::{blur_conventional, footprint_count, scan_dds, scan_seds, scan_sted, BoundaryCondition, ScanMode};
use crate::solve::{solve, Method, SolveReport, SolverConfig};
use crate::system::{build_system, Representation};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpotProfile {
    Gaussian { sigma_px: f64, peak: f64 },
    Disk { radius_px: f64, intensity: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotSpec {
    pub size_px: usize,
    pub profile: SpotProfile,
}

impl SpotSpec {
    pub fn build(&self) -> Result<SpotKernel> {
        match self.profile {
            SpotProfile::Gaussian { sigma_px, peak } => make_gaussian_spot(self.size_px, sigma_px, peak),
            SpotProfile::Disk { radius_px, intensity } => make_disk_spot(self.size_px, radius_px, intensity),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub seed: u64,
    pub scale: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            kind: PhantomKind::UniformRandom,
            seed: 42,
            scale: 255.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Pgm,
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Pgm => "pgm",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = SedsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "pgm" => Ok(Self::Pgm),
            other => Err(SedsError::UnknownKind(other.to_string())),
        }
    }
}

/// Writes a grid in the requested format; measurement metadata is only
/// kept by CSV.
pub fn save_grid(
    path: &Path,
    format: OutputFormat,
    rows: usize,
    cols: usize,
    values: &[f64],
    metadata: &[(&str, String)],
) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
            io::write_grid_csv(&mut w, rows, cols, values, metadata)?;
            std::io::Write::flush(&mut w)?;
            Ok(())
        }
        OutputFormat::Pgm => io::save_pgm16(path, rows, cols, values),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 60×60 ROI, 3×3 spot, explicit system, direct solve.
    Experiment1,
    /// 60×60 ROI, 101×101 spot, matrix-free iterative solve.
    Experiment2,
    /// Flat spot much wider than a 2×2 ROI; the system is singular.
    Degenerate,
}

impl FromStr for Preset {
    type Err = SedsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp1" | "experiment1" => Ok(Self::Experiment1),
            "exp2" | "experiment2" => Ok(Self::Experiment2),
            "degenerate" => Ok(Self::Degenerate),
            other => Err(SedsError::UnknownKind(other.to_string())),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Experiment1 => "exp1",
            Self::Experiment2 => "exp2",
            Self::Degenerate => "degenerate",
        })
    }
}

/// Gaussian width used for the 101×101 experiment spot. Broad Gaussians
/// filling the whole 101-pixel window make the 60×60 system numerically
/// singular in double precision (condition numbers past 1e16 from σ ≈ 2 up);
/// this width keeps it well conditioned.
pub const EXPERIMENT2_SIGMA_PX: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub roi_rows: usize,
    pub roi_cols: usize,
    pub spot: SpotSpec,
    pub phantom: PhantomSpec,
    pub bc: BoundaryCondition,
    pub solver: SolverConfig,
    /// `None` picks explicit storage exactly when the direct solver runs.
    pub representation: Option<Representation>,
    /// DDS comparison frame width; `None` skips the comparison.
    pub dds_margin: Option<usize>,
    pub filter: FilterConfig,
    /// Airy radius of the simulated wide-field microscope; `None` skips it.
    pub airy_radius_px: Option<f64>,
    pub sted: bool,
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

impl ExperimentSpec {
    pub fn preset(preset: Preset) -> Self {
        let base = Self {
            name: preset.to_string(),
            roi_rows: 60,
            roi_cols: 60,
            spot: SpotSpec {
                size_px: 3,
                profile: SpotProfile::Gaussian {
                    sigma_px: 1.0,
                    peak: 1.0,
                },
            },
            phantom: PhantomSpec::default(),
            bc: BoundaryCondition::Zero,
            solver: SolverConfig::default(),
            representation: None,
            dds_margin: None,
            filter: FilterConfig::default(),
            airy_radius_px: None,
            sted: true,
            noise_sigma: 0.0,
            noise_seed: 0,
        };
        match preset {
            Preset::Experiment1 => Self {
                solver: SolverConfig {
                    method: Method::Direct,
                    ..Default::default()
                },
                dds_margin: Some(2),
                airy_radius_px: Some(84.0),
                ..base
            },
            Preset::Experiment2 => Self {
                spot: SpotSpec {
                    size_px: 101,
                    profile: SpotProfile::Gaussian {
                        sigma_px: EXPERIMENT2_SIGMA_PX,
                        peak: 1.0,
                    },
                },
                solver: SolverConfig {
                    method: Method::Iterative,
                    ..Default::default()
                },
                dds_margin: Some(100),
                airy_radius_px: Some(2500.0),
                ..base
            },
            Preset::Degenerate => Self {
                roi_rows: 2,
                roi_cols: 2,
                spot: SpotSpec {
                    size_px: 5,
                    profile: SpotProfile::Disk {
                        radius_px: 4.0,
                        intensity: 1.0,
                    },
                },
                solver: SolverConfig {
                    method: Method::Direct,
                    ..Default::default()
                },
                sted: false,
                ..base
            },
        }
    }

    fn representation(&self) -> Representation {
        self.representation
            .unwrap_or_else(|| preferred_representation(self.roi_rows * self.roi_cols, self.solver.method))
    }
}

/// Where a run writes its artifacts. File names inside `dir` are fixed and
/// distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutputs {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

impl ExperimentOutputs {
    pub fn grid_path(&self, stem: &str) -> PathBuf {
        self.dir.join(format!("{stem}.{}", self.format.extension()))
    }

    pub fn report_path(&self) -> PathBuf {
        self.dir.join("report.txt")
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub metrics: MetricsReport,
    pub solve: SolveReport,
    pub recovered: ImageGrid,
    pub phantom: ImageGrid,
    pub dds_mean_abs_diff: Option<f64>,
    pub sted_dims: Option<(usize, usize)>,
    pub files: Vec<PathBuf>,
    /// The key=value report written to `report.txt`.
    pub report: String,
}

/// Runs the full pipeline and writes the artifacts. Inputs are written
/// before solving, so a failed solve still leaves the phantom, spot and
/// measurements on disk.
pub fn run_experiment(spec: &ExperimentSpec, outputs: &ExperimentOutputs) -> Result<ExperimentResult> {
    spec.solver.validate()?;
    std::fs::create_dir_all(&outputs.dir)?;
    let fmt = outputs.format;
    let mut files = Vec::new();
    let mut save = |stem: &str, rows: usize, cols: usize, values: &[f64], meta: &[(&str, String)]| -> Result<()> {
        let path = outputs.grid_path(stem);
        save_grid(&path, fmt, rows, cols, values, meta)?;
        files.push(path);
        Ok(())
    };

    let phantom = make_phantom(
        spec.roi_rows,
        spec.roi_cols,
        spec.phantom.kind,
        spec.phantom.seed,
        spec.phantom.scale,
    )?;
    let spot = spec.spot.build()?;
    let k = spot.size_px();
    save("phantom", phantom.rows(), phantom.cols(), phantom.values(), &[])?;
    save("spot", k, k, spot.values(), &[("kind", "spot".into())])?;

    let measured = scan_seds(&phantom, &spot, spec.bc).with_noise(spec.noise_sigma, spec.noise_seed)?;
    save(
        "measurements",
        measured.rows(),
        measured.cols(),
        measured.values(),
        &io::measurement_metadata(&measured),
    )?;

    let mut report: Vec<(&str, String)> = vec![
        ("experiment", spec.name.clone()),
        ("roi", format!("{}x{}", spec.roi_rows, spec.roi_cols)),
        ("spot_size_px", k.to_string()),
        ("bc", spec.bc.to_string()),
        ("representation", spec.representation().to_string()),
        (
            "seds_footprints",
            footprint_count(ScanMode::Seds, spec.roi_rows, spec.roi_cols, k, 0).to_string(),
        ),
    ];

    let system = build_system(&measured, &spot, spec.bc, spec.representation())?;
    let (recovered, solve_report) = solve(&system, &spec.solver)?;
    save("recovered", recovered.rows(), recovered.cols(), recovered.values(), &[])?;
    let metrics = MetricsReport::compare(&phantom, &recovered)?;
    report.extend(solve_report.to_kv());
    report.extend(metrics.to_kv());

    let mut sted_dims = None;
    if spec.sted {
        match scan_sted(&phantom, &spot) {
            Ok(img) => {
                sted_dims = Some(img.dims());
                save("sted", img.rows(), img.cols(), img.values(), &[])?;
                report.push(("sted", format!("{}x{}", img.rows(), img.cols())));
            }
            Err(SedsError::SpotLargerThanRoi { .. }) => {
                report.push(("sted", "spot-larger-than-roi".into()));
            }
            Err(e) => return Err(e),
        }
    }

    if let Some(radius) = spec.airy_radius_px {
        // Offsets beyond the image extent never contribute to a same-size blur.
        let reach = 2 * spec.roi_rows.max(spec.roi_cols) + 1;
        let psf = make_conventional_psf(radius, Some(reach))?;
        let blurred = blur_conventional(&phantom, &psf);
        save("conventional", blurred.rows(), blurred.cols(), blurred.values(), &[])?;
        report.push(("airy_radius_px", format_f64(radius)));
    }

    let mut dds_mad = None;
    if let Some(margin) = spec.dds_margin {
        let dds_scan = scan_dds(&phantom, &spot, spec.bc, margin).with_noise(spec.noise_sigma, spec.noise_seed)?;
        let dds_image = dds_deconvolve(&dds_scan, &spot, &spec.filter)?;
        save("dds_recovered", dds_image.rows(), dds_image.cols(), dds_image.values(), &[])?;
        let mad = mean_abs_diff(&phantom, &dds_image)?;
        dds_mad = Some(mad);
        report.push((
            "dds_footprints",
            footprint_count(ScanMode::Dds, spec.roi_rows, spec.roi_cols, k, margin).to_string(),
        ));
        report.push(("dds_filter", spec.filter.kind.to_string()));
        report.push(("dds_mean_abs_diff", format_f64(mad)));
    }

    let report = format_kv(&report);
    std::fs::write(outputs.report_path(), &report)?;
    files.push(outputs.report_path());

    Ok(ExperimentResult {
        metrics,
        solve: solve_report,
        recovered,
        phantom,
        dds_mean_abs_diff: dds_mad,
        sted_dims,
        files,
        report,
    })
}
