use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use seds::dds::{compare_methods, dds_deconvolve, FilterConfig, FilterKind, DEFAULT_INVERSE_EPS, DEFAULT_WIENER_K};
use seds::experiment::{
    run_experiment, save_grid, ExperimentOutputs, ExperimentSpec, OutputFormat, Preset, SpotProfile,
};
use seds::io::{self, format_kv, measurement_metadata};
use seds::metrics::MetricsReport;
use seds::optics::{make_conventional_psf, make_disk_spot, make_gaussian_spot, make_phantom, validate_spot, PhantomKind};
use seds::scan::{blur_conventional, default_dds_margin, scan_dds, scan_seds, scan_sted, BoundaryCondition, ScanMode};
use seds::solve::{solve, Method, SolverConfig, DEFAULT_TOLERANCE};
use seds::system::{build_system, Operator, Representation};
use seds::SedsError;

#[derive(Parser, Debug)]
#[command(name = "seds", version, about = "Dense-scan microscopy simulation and reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a test sample.
    Phantom(PhantomArgs),
    /// Generate an illumination spot.
    Spot(SpotArgs),
    /// Scan a sample with a spot.
    Scan(ScanArgs),
    /// Recover the ROI from a dense scan.
    Solve(SolveArgs),
    /// Coarse scan at a stride of one spot width.
    Sted(StedArgs),
    /// Wide-field image through a broad point spread function.
    Blur(BlurArgs),
    /// Recover the ROI from a framed scan by frequency-domain filtering.
    Dds(DdsArgs),
    /// Run both recovery methods on one sample.
    Compare(CompareArgs),
    /// Run a complete simulation experiment.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tol: f64,
    /// Iteration cap for the iterative solver (default 10·n).
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, default_value = "auto")]
    method: Method,
    /// Tikhonov damping for the iterative solver.
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            tolerance: self.tol,
            max_iterations: self.max_iters,
            method: self.method,
            regularization_lambda: self.lambda,
        }
    }
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[arg(long, default_value = "inverse")]
    filter: FilterKind,
    /// Inverse filter cutoff relative to the spectrum peak.
    #[arg(long, default_value_t = DEFAULT_INVERSE_EPS)]
    eps: f64,
    /// Wiener noise-to-signal constant.
    #[arg(long, default_value_t = DEFAULT_WIENER_K)]
    k: f64,
}

impl FilterArgs {
    fn config(&self) -> FilterConfig {
        FilterConfig {
            kind: self.filter,
            eps: self.eps,
            k: self.k,
        }
    }
}

#[derive(Args, Debug)]
struct PhantomArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    #[arg(long, default_value = "uniform-random")]
    kind: PhantomKind,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 255.0)]
    scale: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct SpotArgs {
    /// Odd side length in pixels.
    #[arg(long)]
    size: usize,
    /// `gaussian` or `disk`.
    #[arg(long, default_value = "gaussian")]
    profile: String,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    peak: f64,
    #[arg(long)]
    radius: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct ScanArgs {
    /// Sample Grid-CSV.
    #[arg(long)]
    input: PathBuf,
    /// Spot Grid-CSV.
    #[arg(long)]
    spot: PathBuf,
    #[arg(long, default_value = "seds")]
    mode: ScanMode,
    /// Peripheral frame width for DDS scans (default k - 1).
    #[arg(long)]
    margin: Option<usize>,
    #[arg(long, default_value = "zero")]
    bc: BoundaryCondition,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Noise seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Measurement Grid-CSV from `scan --mode seds`.
    #[arg(long)]
    measurements: PathBuf,
    #[arg(long)]
    spot: PathBuf,
    /// Overrides the boundary recorded in the measurement file.
    #[arg(long)]
    bc: Option<BoundaryCondition>,
    /// Matrix storage (default: explicit exactly when solving directly).
    #[arg(long)]
    repr: Option<Representation>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Ground truth for error metrics.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Also write the key=value report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the assembled matrix as `row col value` lines.
    #[arg(long)]
    export_matrix: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StedArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    spot: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct BlurArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    airy_radius: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct DdsArgs {
    /// Measurement Grid-CSV from `scan --mode dds`.
    #[arg(long)]
    measurements: PathBuf,
    #[arg(long)]
    spot: PathBuf,
    #[command(flatten)]
    filter: FilterArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    spot: PathBuf,
    #[arg(long)]
    margin: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    filter: FilterArgs,
    /// Directory for both reconstructions.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print wall times to stderr.
    #[arg(long)]
    timings: bool,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long, default_value = "exp1")]
    preset: Preset,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    /// Phantom seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bc: Option<BoundaryCondition>,
    /// DDS frame width.
    #[arg(long)]
    margin: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    repr: Option<Representation>,
    /// Gaussian spot width override.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    #[command(flatten)]
    filter: FilterArgs,
    #[arg(long)]
    timings: bool,
}

fn exit_code(err: &SedsError) -> u8 {
    match err {
        SedsError::EvenSize(_)
        | SedsError::NonPositiveParam { .. }
        | SedsError::UnknownKind(_)
        | SedsError::InvalidGrid(_)
        | SedsError::NotExplicit => 2,
        SedsError::Singular { .. } => 3,
        SedsError::NotConverged { .. } => 4,
        SedsError::Io(_) | SedsError::Parse(_) => 5,
        SedsError::SpotLargerThanRoi { .. } => 6,
        SedsError::DimensionOverflow { .. } => 7,
        SedsError::ModeMismatch { .. } | SedsError::SpotMismatch { .. } | SedsError::MarginTooSmall { .. } => 8,
        SedsError::LengthMismatch { .. } | SedsError::DimensionMismatch { .. } | SedsError::ZeroMeanReference => 9,
    }
}

fn emit_report(pairs: &[(&str, String)], path: Option<&Path>) -> seds::Result<()> {
    let text = format_kv(pairs);
    print!("{text}");
    if let Some(path) = path {
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn save_image(out: &OutputArgs, image: &seds::grid::ImageGrid) -> seds::Result<()> {
    save_grid(&out.out, out.format, image.rows(), image.cols(), image.values(), &[])
}

fn run_phantom(a: &PhantomArgs) -> seds::Result<()> {
    let image = make_phantom(a.rows, a.cols, a.kind, a.seed, a.scale)?;
    save_image(&a.output, &image)
}

fn run_spot(a: &SpotArgs) -> seds::Result<()> {
    let spot = match a.profile.as_str() {
        "gaussian" => make_gaussian_spot(a.size, a.sigma, a.peak)?,
        "disk" => {
            let radius = a.radius.unwrap_or(a.size as f64 / 2.0);
            make_disk_spot(a.size, radius, a.peak)?
        }
        other => return Err(SedsError::UnknownKind(other.to_string())),
    };
    let diag = validate_spot(&spot);
    if diag.is_constant {
        eprintln!("warning: spot is constant; dense-scan systems built from it are singular");
    }
    let k = spot.size_px();
    save_grid(&a.output.out, a.output.format, k, k, spot.values(), &[("kind", "spot".into())])
}

fn run_scan(a: &ScanArgs) -> seds::Result<()> {
    let sample = io::load_image_csv(&a.input, false)?;
    let spot = io::load_spot_csv(&a.spot)?;
    let measured = match a.mode {
        ScanMode::Seds => scan_seds(&sample, &spot, a.bc),
        ScanMode::Dds => {
            let margin = a.margin.unwrap_or_else(|| default_dds_margin(spot.size_px()));
            scan_dds(&sample, &spot, a.bc, margin)
        }
    }
    .with_noise(a.noise, a.seed)?;
    save_grid(
        &a.output.out,
        a.output.format,
        measured.rows(),
        measured.cols(),
        measured.values(),
        &measurement_metadata(&measured),
    )
}

fn metrics_against(reference: Option<&Path>, image: &seds::grid::ImageGrid) -> seds::Result<Vec<(&'static str, String)>> {
    match reference {
        Some(path) => {
            let reference = io::load_image_csv(path, true)?;
            Ok(MetricsReport::compare(&reference, image)?.to_kv())
        }
        None => Ok(Vec::new()),
    }
}

fn run_solve(a: &SolveArgs) -> seds::Result<()> {
    let measured = io::load_measurement_csv(&a.measurements)?;
    let spot = io::load_spot_csv(&a.spot)?;
    let bc = a.bc.unwrap_or(measured.bc());
    let config = a.solver.config();
    config.validate()?;
    let n = measured.rows() * measured.cols();
    let repr = a
        .repr
        .unwrap_or_else(|| seds::dds::preferred_representation(n, config.method));
    let system = build_system(&measured, &spot, bc, repr)?;
    if let Some(path) = &a.export_matrix {
        match &system.operator {
            Operator::Explicit(m) => {
                let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
                m.write_coo(&mut w)?;
                std::io::Write::flush(&mut w)?;
            }
            Operator::Implicit(_) => return Err(SedsError::NotExplicit),
        }
    }
    let (image, report) = match solve(&system, &config) {
        Ok(done) => done,
        Err(SedsError::NotConverged { image, report }) => {
            // Keep the best iterate for inspection before failing.
            save_image(&a.output, &image)?;
            let mut kv = vec![("representation", repr.to_string())];
            kv.extend(report.to_kv());
            emit_report(&kv, a.report.as_deref())?;
            return Err(SedsError::NotConverged { image, report });
        }
        Err(e) => return Err(e),
    };
    save_image(&a.output, &image)?;
    let mut kv = vec![("representation", repr.to_string())];
    kv.extend(report.to_kv());
    kv.extend(metrics_against(a.reference.as_deref(), &image)?);
    emit_report(&kv, a.report.as_deref())
}

fn run_sted(a: &StedArgs) -> seds::Result<()> {
    let sample = io::load_image_csv(&a.input, false)?;
    let spot = io::load_spot_csv(&a.spot)?;
    save_image(&a.output, &scan_sted(&sample, &spot)?)
}

fn run_blur(a: &BlurArgs) -> seds::Result<()> {
    let sample = io::load_image_csv(&a.input, false)?;
    let reach = 2 * sample.rows().max(sample.cols()) + 1;
    let psf = make_conventional_psf(a.airy_radius, Some(reach))?;
    save_image(&a.output, &blur_conventional(&sample, &psf))
}

fn run_dds(a: &DdsArgs) -> seds::Result<()> {
    let measured = io::load_measurement_csv(&a.measurements)?;
    let spot = io::load_spot_csv(&a.spot)?;
    let image = dds_deconvolve(&measured, &spot, &a.filter.config())?;
    save_image(&a.output, &image)?;
    let mut kv = vec![
        ("filter", a.filter.filter.to_string()),
        ("footprints", measured.values().len().to_string()),
    ];
    kv.extend(metrics_against(a.reference.as_deref(), &image)?);
    emit_report(&kv, a.report.as_deref())
}

fn run_compare(a: &CompareArgs) -> seds::Result<()> {
    let sample = io::load_image_csv(&a.input, false)?;
    let spot = io::load_spot_csv(&a.spot)?;
    let margin = a.margin.unwrap_or_else(|| default_dds_margin(spot.size_px()));
    let config = a.solver.config();
    config.validate()?;
    let report = compare_methods(&sample, &spot, margin, &config, &a.filter.config())?;
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir)?;
        let ext = a.format.extension();
        for (stem, image) in [("seds_recovered", &report.seds_image), ("dds_recovered", &report.dds_image)] {
            let path = dir.join(format!("{stem}.{ext}"));
            save_grid(&path, a.format, image.rows(), image.cols(), image.values(), &[])?;
        }
    }
    if a.timings {
        eprintln!("seds_seconds={:.6}", report.seds_seconds);
        eprintln!("dds_seconds={:.6}", report.dds_seconds);
    }
    emit_report(&report.to_kv(false), a.report.as_deref())
}

fn run_experiment_cmd(a: &ExperimentArgs) -> seds::Result<()> {
    let mut spec = ExperimentSpec::preset(a.preset);
    if let Some(seed) = a.seed {
        spec.phantom.seed = seed;
    }
    if let Some(bc) = a.bc {
        spec.bc = bc;
    }
    if a.margin.is_some() {
        spec.dds_margin = a.margin;
    }
    if let Some(tol) = a.tol {
        spec.solver.tolerance = tol;
    }
    if a.max_iters.is_some() {
        spec.solver.max_iterations = a.max_iters;
    }
    if let Some(method) = a.method {
        spec.solver.method = method;
    }
    if let Some(lambda) = a.lambda {
        spec.solver.regularization_lambda = lambda;
    }
    if a.repr.is_some() {
        spec.representation = a.repr;
    }
    if let Some(sigma) = a.sigma {
        match &mut spec.spot.profile {
            SpotProfile::Gaussian { sigma_px, .. } => *sigma_px = sigma,
            SpotProfile::Disk { .. } => {
                return Err(SedsError::InvalidGrid("--sigma applies to Gaussian spots only".into()))
            }
        }
    }
    spec.noise_sigma = a.noise;
    spec.noise_seed = a.noise_seed;
    spec.filter = a.filter.config();

    let outputs = ExperimentOutputs {
        dir: a.out_dir.clone(),
        format: a.format,
    };
    let start = Instant::now();
    let result = run_experiment(&spec, &outputs)?;
    if a.timings {
        eprintln!("seconds={:.6}", start.elapsed().as_secs_f64());
    }
    print!("{}", result.report);
    Ok(())
}

fn run(command: &Command) -> seds::Result<()> {
    match command {
        Command::Phantom(a) => run_phantom(a),
        Command::Spot(a) => run_spot(a),
        Command::Scan(a) => run_scan(a),
        Command::Solve(a) => run_solve(a),
        Command::Sted(a) => run_sted(a),
        Command::Blur(a) => run_blur(a),
        Command::Dds(a) => run_dds(a),
        Command::Compare(a) => run_compare(a),
        Command::Experiment(a) => run_experiment_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
