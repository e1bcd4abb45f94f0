//! Command implementations behind the `fftrelu` binary: deblurring single
//! images, generating synthetic blur, and benchmarking over a dataset.

pub mod config_file;
pub mod io;
pub mod report;
pub mod synth;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use fftrelu::metrics::{align_subpixel, error_ratio_registered, kernel_similarity, ssim, Registration};
use fftrelu::{
    blind_deconvolve, nonblind_deconvolve, to_grayscale, ColorImage, DeblurError, Image, Kernel, SolverConfig,
};
use rayon::prelude::*;

use crate::io::{read_image, read_kernel, write_image, write_kernel_png, write_kernel_text};
use crate::report::{Failure, HostInfo, ReportRow, RunReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("output error: {0}")]
    Output(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(DeblurError),
}

impl CliError {
    /// Process exit status: 1 for IO, 2 for configuration, 3 for solver
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Output(_) => 1,
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl From<DeblurError> for CliError {
    fn from(e: DeblurError) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Solver(e)
        }
    }
}

/// Command-line values that take precedence over the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub kernel_size: Option<usize>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub alpha: Option<f64>,
    pub max_iter: Option<usize>,
}

/// Loads the configuration file (or defaults) and applies overrides.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<SolverConfig, CliError> {
    let mut cfg = match path {
        Some(p) => config_file::parse_config(p)?,
        None => SolverConfig::default(),
    };
    if let Some(v) = overrides.kernel_size {
        cfg.kernel_size = v;
    }
    if let Some(v) = overrides.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = overrides.mu {
        cfg.mu = v;
    }
    if let Some(v) = overrides.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = overrides.max_iter {
        cfg.max_iter = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Paths of the PNG and text renderings of a kernel. Whatever extension
/// `base` carries is replaced.
pub fn kernel_output_paths(base: &Path) -> (PathBuf, PathBuf) {
    (base.with_extension("png"), base.with_extension("txt"))
}

fn default_kernel_base(output: &Path) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    output.with_file_name(format!("{stem}_kernel"))
}

#[derive(Debug, Clone)]
pub struct DeblurArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub kernel_out: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub overrides: Overrides,
}

/// Blind deblurring of one image. Writes the latent image and the kernel
/// (PNG and text) and prints stage timings.
pub fn cmd_deblur(args: &DeblurArgs) -> Result<fftrelu::DeblurResult, CliError> {
    let cfg = load_config(args.config.as_deref(), &args.overrides)?;
    let (blurred, depth) = read_image(&args.input)?;
    let result = blind_deconvolve(&blurred, &cfg)?;
    write_image(&args.output, &result.latent, depth)?;
    let base = args
        .kernel_out
        .clone()
        .unwrap_or_else(|| default_kernel_base(&args.output));
    let (png, txt) = kernel_output_paths(&base);
    write_kernel_png(&png, &result.kernel)?;
    write_kernel_text(&txt, &result.kernel)?;
    println!(
        "blind: {:.3} s, non-blind: {:.3} s, total: {:.3} s",
        result.timing.blind_seconds,
        result.timing.nonblind_seconds,
        result.timing.total()
    );
    Ok(result)
}

/// Where the blur kernel comes from.
#[derive(Debug, Clone)]
pub enum KernelSource {
    File(PathBuf),
    RandomWalk { seed: u64, size: usize },
}

#[derive(Debug, Clone)]
pub struct BlurArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub kernel: KernelSource,
    /// Standard deviation of additive Gaussian noise.
    pub noise: Option<f64>,
    /// Seed of the noise generator.
    pub seed: u64,
    /// Also save the kernel used (PNG and text).
    pub kernel_out: Option<PathBuf>,
}

/// Synthesizes a blurry observation from a sharp image.
pub fn cmd_blur(args: &BlurArgs) -> Result<(), CliError> {
    let k = match &args.kernel {
        KernelSource::File(p) => read_kernel(p)?,
        KernelSource::RandomWalk { seed, size } => synth::random_walk_kernel(*size, *seed)?,
    };
    let (sharp, depth) = read_image(&args.input)?;
    let mut out = synth::blur_image(&sharp, &k)?;
    if let Some(sigma) = args.noise {
        out = synth::add_noise(&out, sigma, args.seed)?;
    }
    write_image(&args.output, &out, depth)?;
    if let Some(base) = &args.kernel_out {
        let (png, txt) = kernel_output_paths(base);
        write_kernel_png(&png, &k)?;
        write_kernel_text(&txt, &k)?;
    }
    Ok(())
}

/// Quality of one blind deblurring result against its ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMetrics {
    pub psnr_db: f64,
    pub ssim: f64,
    pub error_ratio: f64,
    pub kernel_sim: f64,
    pub seconds: f64,
}

/// Runs blind deconvolution on `blurry` and scores it on luminance.
///
/// The estimate is registered to the sharp image (integer shifts within the
/// kernel radius, then sub-pixel refinement) before PSNR and SSIM. The
/// error ratio compares against non-blind deconvolution with the true
/// kernel, registered the same way.
pub fn evaluate_pair(
    blurry: &ColorImage,
    sharp: &Image,
    k_true: &Kernel,
    cfg: &SolverConfig,
) -> Result<PairMetrics, CliError> {
    let result = blind_deconvolve(blurry, cfg)?;
    let estimate = to_grayscale(&result.latent);
    let max_shift = cfg.kernel_size / 2;
    let aligned = align_subpixel(&estimate, sharp, max_shift)?;
    let with_true = to_grayscale(&nonblind_deconvolve(blurry, k_true, cfg)?);
    Ok(PairMetrics {
        psnr_db: aligned.psnr,
        ssim: ssim(&aligned.image, sharp)?,
        error_ratio: error_ratio_registered(&estimate, &with_true, sharp, max_shift, Registration::Subpixel)?,
        kernel_sim: kernel_similarity(&result.kernel, k_true)?,
        seconds: result.timing.total(),
    })
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq, serde::Deserialize)]
pub struct ManifestEntry {
    pub blurry: String,
    pub sharp: String,
    pub kernel: String,
}

/// Name of the manifest inside a dataset directory.
pub const MANIFEST_NAME: &str = "manifest.csv";

pub fn read_manifest(dataset: &Path) -> Result<Vec<ManifestEntry>, CliError> {
    let path = dataset.join(MANIFEST_NAME);
    let err = |e: &dyn std::fmt::Display| CliError::Input(format!("{}: {e}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&path)
        .map_err(|e| err(&e))?;
    let entries = reader
        .deserialize()
        .collect::<Result<Vec<ManifestEntry>, _>>()
        .map_err(|e| err(&e))?;
    if entries.is_empty() {
        return Err(err(&"manifest lists no images"));
    }
    Ok(entries)
}

#[derive(Debug, Clone)]
pub struct BenchArgs {
    pub dataset: PathBuf,
    pub report: PathBuf,
    pub config: Option<PathBuf>,
    pub overrides: Overrides,
    pub sequential: bool,
}

fn run_entry(dataset: &Path, entry: &ManifestEntry, cfg: &SolverConfig) -> Result<ReportRow, CliError> {
    let (blurry, _) = read_image(&dataset.join(&entry.blurry))?;
    let (sharp, _) = read_image(&dataset.join(&entry.sharp))?;
    let k = read_kernel(&dataset.join(&entry.kernel))?;
    let m = evaluate_pair(&blurry, &to_grayscale(&sharp), &k, cfg)?;
    Ok(ReportRow {
        image: entry.blurry.clone(),
        kernel: entry.kernel.clone(),
        psnr_db: m.psnr_db,
        ssim: m.ssim,
        error_ratio: m.error_ratio,
        kernel_sim: m.kernel_sim,
        seconds: m.seconds,
    })
}

/// Deblurs every manifest entry and writes the report. Images run in
/// parallel unless `sequential` is set. Per-image failures are recorded in
/// the report; the command fails only if no image succeeds.
pub fn cmd_bench(args: &BenchArgs) -> Result<RunReport, CliError> {
    let cfg = load_config(args.config.as_deref(), &args.overrides)?;
    let entries = read_manifest(&args.dataset)?;
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let outcomes: Vec<Result<ReportRow, CliError>> = if args.sequential {
        entries.iter().map(|e| run_entry(&args.dataset, e, &cfg)).collect()
    } else {
        entries.par_iter().map(|e| run_entry(&args.dataset, e, &cfg)).collect()
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (entry, outcome) in entries.iter().zip(outcomes) {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) => {
                eprintln!("{}: {e}", entry.blurry);
                failures.push(Failure {
                    image: entry.blurry.clone(),
                    kernel: entry.kernel.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    let report = RunReport {
        rows,
        failures,
        config: cfg,
        sequential: args.sequential,
        timestamp,
        host: HostInfo::current(),
    };
    report.write(&args.report)?;
    if let Some(agg) = report.aggregate() {
        println!(
            "{} images: psnr {:.2} dB, ssim {:.3}, error ratio {:.2}, kernel similarity {:.3}, {:.2} s/image",
            report.rows.len(),
            agg.psnr_db,
            agg.ssim,
            agg.error_ratio,
            agg.kernel_sim,
            agg.seconds
        );
        Ok(report)
    } else {
        Err(CliError::Solver(DeblurError::DegenerateInput(
            "every image in the manifest failed".into(),
        )))
    }
}
