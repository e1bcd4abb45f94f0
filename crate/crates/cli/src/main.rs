use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fftrelu_cli::{
    cmd_bench, cmd_blur, cmd_deblur, BenchArgs, BlurArgs, CliError, DeblurArgs, KernelSource, Overrides,
};

#[derive(Parser)]
#[command(
    name = "fftrelu",
    version,
    about = "Blind image deblurring with an FFT-ReLU sparsity prior"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the blur kernel of an image and deblur it.
    Deblur {
        /// Blurry input image (PNG or PNM, 8 or 16 bit).
        input: PathBuf,
        /// Deblurred output image; keeps the input bit depth.
        #[arg(long, short)]
        output: PathBuf,
        /// Kernel output base path; `.png` and `.txt` files are written.
        #[arg(long)]
        kernel_out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Blur a sharp image with a kernel file or a seeded random kernel.
    Blur {
        /// Sharp input image.
        input: PathBuf,
        /// Blurred output image.
        #[arg(long, short)]
        output: PathBuf,
        /// Kernel as a `.txt` matrix or an image.
        #[arg(long, conflicts_with = "random_kernel", required_unless_present = "random_kernel")]
        kernel: Option<PathBuf>,
        /// Seed of a random camera-shake kernel.
        #[arg(long, value_name = "SEED")]
        random_kernel: Option<u64>,
        /// Size of the random kernel.
        #[arg(long, default_value_t = 15)]
        kernel_size: usize,
        /// Standard deviation of additive Gaussian noise.
        #[arg(long)]
        noise: Option<f64>,
        /// Seed of the noise generator.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also save the kernel (`.png` and `.txt`).
        #[arg(long)]
        kernel_out: Option<PathBuf>,
    },
    /// Deblur every pair of a dataset manifest and report metrics.
    Bench {
        /// Directory containing `manifest.csv` (columns blurry,sharp,kernel).
        dataset: PathBuf,
        /// Report CSV; a JSON sidecar is written next to it.
        #[arg(long, short)]
        output: PathBuf,
        /// Process images one at a time on a single thread.
        #[arg(long)]
        sequential: bool,
        #[command(flatten)]
        solver: SolverFlags,
    },
}

#[derive(Args)]
struct SolverFlags {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Odd kernel support size at the finest scale.
    #[arg(long)]
    kernel_size: Option<usize>,
    /// Weight of the RFT sparsity term; 0 disables it.
    #[arg(long)]
    lambda: Option<f64>,
    /// Weight of the gradient sparsity term.
    #[arg(long)]
    mu: Option<f64>,
    /// Ridge weight of kernel estimation.
    #[arg(long)]
    alpha: Option<f64>,
    /// Outer iterations per pyramid level.
    #[arg(long)]
    max_iter: Option<usize>,
}

impl SolverFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            kernel_size: self.kernel_size,
            lambda: self.lambda,
            mu: self.mu,
            alpha: self.alpha,
            max_iter: self.max_iter,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Deblur {
            input,
            output,
            kernel_out,
            solver,
        } => cmd_deblur(&DeblurArgs {
            input,
            output,
            kernel_out,
            overrides: solver.overrides(),
            config: solver.config,
        })
        .map(|_| ()),
        Command::Blur {
            input,
            output,
            kernel,
            random_kernel,
            kernel_size,
            noise,
            seed,
            kernel_out,
        } => {
            let kernel = match (kernel, random_kernel) {
                (Some(path), _) => KernelSource::File(path),
                (None, Some(seed)) => KernelSource::RandomWalk {
                    seed,
                    size: kernel_size,
                },
                (None, None) => unreachable!("clap requires one kernel source"),
            };
            cmd_blur(&BlurArgs {
                input,
                output,
                kernel,
                noise,
                seed,
                kernel_out,
            })
        }
        Command::Bench {
            dataset,
            output,
            sequential,
            solver,
        } => cmd_bench(&BenchArgs {
            dataset,
            report: output,
            overrides: solver.overrides(),
            config: solver.config,
            sequential,
        })
        .map(|_| ()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
