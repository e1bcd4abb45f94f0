//! Blind image deblurring with an FFT-ReLU sparsity prior.
//!
//! A blurred image `B = I ⊗ k + n` is deblurred by alternating between a
//! latent-image solve (half-quadratic splitting with an L0 gradient prior
//! and a sparsity prior on the FFT-ReLU transform of the latent) and a
//! gradient-domain kernel solve, coarse to fine. The final image comes from
//! a non-blind pass with ringing suppression.

pub mod config;
pub mod error;
pub mod image;
pub mod kernel;
pub mod latent;
pub mod metrics;
pub mod pipeline;
pub mod rft;
pub mod spectral;

pub use config::SolverConfig;
pub use error::{DeblurError, Result};
pub use image::{build_scale_schedule, to_grayscale, ColorImage, Image, ScaleLevel, ScaleSchedule};
pub use kernel::Kernel;
pub use metrics::{error_ratio, kernel_similarity, psnr, ssim};
pub use pipeline::{blind_deconvolve, nonblind_deconvolve, DeblurResult, StageTiming};
pub use rft::{fit_surrogate, rft, RftSurrogate};
pub use spectral::{convolve, Spectrum};
