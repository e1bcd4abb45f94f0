//! Latent-image estimation by half-quadratic splitting.
//!
//! The L0 terms on gradients and on the RFT response are split off into
//! auxiliary variables `g` and `h`. Each inner round hard-thresholds the
//! auxiliaries and then solves the remaining quadratic problem in `I` in
//! closed form in the frequency domain, with the RFT replaced by its fitted
//! diagonal surrogate.

use num_complex::Complex64;

use crate::config::SolverConfig;
use crate::error::{ensure_same_dims, DeblurError, Result};
use crate::image::{divergence_adjoint, gradients, Image};
use crate::kernel::Kernel;
use crate::rft::{rft, RftSurrogate};
use crate::spectral::{fft2, gradient_otfs, ifft2, ifft2_real, psf_to_otf, Spectrum};

/// Added to every denominator bin of the closed-form update.
pub const DENOMINATOR_STABILIZER: f64 = 1e-8;

/// Hard threshold for the RFT auxiliary: keep values with `v² ≥ λ/β`.
pub fn update_h(rft_img: &Image, lambda: f64, beta: f64) -> Image {
    let thr = lambda / beta;
    rft_img.map(|v| if v * v >= thr { v } else { 0.0 })
}

/// Joint hard threshold for the gradient pair: keep `(gx, gy)` where
/// `gx² + gy² ≥ μ/γ`.
pub fn update_g(gx: &Image, gy: &Image, mu: f64, gamma: f64) -> (Image, Image) {
    let thr = mu / gamma;
    let mut ox = gx.clone();
    let mut oy = gy.clone();
    for (x, y) in ox.data_mut().iter_mut().zip(oy.data_mut().iter_mut()) {
        if *x * *x + *y * *y < thr {
            *x = 0.0;
            *y = 0.0;
        }
    }
    (ox, oy)
}

/// Spectra that stay fixed while the auxiliaries change: the blur, its
/// correlation with the observation, and the gradient operators.
#[derive(Debug, Clone)]
pub struct LatentSystem {
    height: usize,
    width: usize,
    kernel_rhs: Vec<Complex64>,
    kernel_power: Vec<f64>,
    gradient_power: Vec<f64>,
}

impl LatentSystem {
    pub fn new(blurred: &Image, k: &Kernel) -> Result<Self> {
        let (h, w) = blurred.dims();
        let otf = psf_to_otf(k, h, w)?;
        let fb = fft2(blurred);
        let (dx, dy) = gradient_otfs(h, w);
        Ok(LatentSystem {
            height: h,
            width: w,
            kernel_rhs: otf.data().iter().zip(fb.data()).map(|(k, b)| k.conj() * b).collect(),
            kernel_power: otf.data().iter().map(|k| k.norm_sqr()).collect(),
            gradient_power: dx
                .data()
                .iter()
                .zip(dy.data())
                .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
                .collect(),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Closed-form minimizer of
    /// `‖I⊗k − B‖² + γ‖∇I − g‖² + β‖F·I − h‖²`, returned as a spectrum.
    /// `rft_term` carries `(h, F)`; without it the last term is dropped.
    pub fn solve_spectrum(
        &self,
        gx: &Image,
        gy: &Image,
        rft_term: Option<(&Image, &RftSurrogate)>,
        gamma: f64,
        beta: f64,
    ) -> Result<Spectrum> {
        let dims = self.dims();
        ensure_same_dims("gradient auxiliary", dims, gx.dims())?;
        ensure_same_dims("gradient auxiliary", dims, gy.dims())?;
        let fg = fft2(&divergence_adjoint(gx, gy));
        let n = self.height * self.width;
        let mut num: Vec<Complex64> = (0..n).map(|i| self.kernel_rhs[i] + fg.data()[i] * gamma).collect();
        let mut den: Vec<f64> = (0..n)
            .map(|i| self.kernel_power[i] + gamma * self.gradient_power[i] + DENOMINATOR_STABILIZER)
            .collect();
        if let Some((h, f)) = rft_term {
            ensure_same_dims("rft auxiliary", dims, h.dims())?;
            ensure_same_dims("surrogate", dims, f.dims())?;
            let fh = fft2(h);
            for i in 0..n {
                let m = f.multiplier().data()[i];
                num[i] += m.conj() * fh.data()[i] * beta;
                den[i] += beta * m.norm_sqr();
            }
        }
        for (c, &d) in num.iter_mut().zip(&den) {
            if !d.is_finite() || d <= 0.0 {
                return Err(DeblurError::Numeric(format!(
                    "latent update denominator {d} is not positive"
                )));
            }
            *c /= d;
        }
        Spectrum::new(self.height, self.width, num)
    }
}

/// One closed-form latent update.
#[allow(clippy::too_many_arguments)]
pub fn update_i(
    blurred: &Image,
    k: &Kernel,
    gx: &Image,
    gy: &Image,
    h: &Image,
    f: &RftSurrogate,
    gamma: f64,
    beta: f64,
) -> Result<Image> {
    let sys = LatentSystem::new(blurred, k)?;
    ifft2(&sys.solve_spectrum(gx, gy, Some((h, f)), gamma, beta)?)
}

/// Splitting state after an inner round; handed to observers.
#[derive(Debug, Clone)]
pub struct HqsState {
    pub latent: Image,
    pub gx: Image,
    pub gy: Image,
    /// Thresholded RFT auxiliary; `None` when the RFT prior is inactive.
    pub h: Option<Image>,
    pub gamma: f64,
    pub beta: f64,
}

/// Latent estimate starting from the observation itself.
pub fn solve_latent(blurred: &Image, k: &Kernel, f: Option<&RftSurrogate>, cfg: &SolverConfig) -> Result<Image> {
    solve_latent_from(blurred, blurred, k, f, cfg, |_| {})
}

/// Runs the splitting loop from `init`, reporting every inner round to
/// `observer`.
///
/// The RFT term is active when a surrogate is supplied and `lambda > 0`.
/// Penalties start at `gamma_init`/`beta_init`, grow by `penalty_growth`
/// after each round (capped at `penalty_max`) and the loop ends once every
/// active penalty has reached the cap. The result is clamped to [0, 1].
pub fn solve_latent_from(
    blurred: &Image,
    init: &Image,
    k: &Kernel,
    f: Option<&RftSurrogate>,
    cfg: &SolverConfig,
    mut observer: impl FnMut(&HqsState),
) -> Result<Image> {
    ensure_same_dims("latent init", blurred.dims(), init.dims())?;
    let sys = LatentSystem::new(blurred, k)?;
    let rft_surrogate = f.filter(|_| cfg.lambda > 0.0);
    let (mut gamma, mut beta) = (cfg.gamma_init(), cfg.beta_init());
    if gamma.is_nan() || gamma <= 0.0 || (rft_surrogate.is_some() && (beta.is_nan() || beta <= 0.0)) {
        return Err(DeblurError::config("gamma_init", "penalties must be positive"));
    }
    let cap = cfg.penalty_max;
    let mut latent = init.clone();
    let mut spectrum = fft2(&latent);
    loop {
        let (g, b) = (gamma.min(cap), beta.min(cap));
        let (ix, iy) = gradients(&latent);
        let (gx, gy) = update_g(&ix, &iy, cfg.mu, g);
        let h = rft_surrogate.map(|_| update_h(&rft_of_spectrum(&spectrum, &latent), cfg.lambda, b));
        let term = h.as_ref().zip(rft_surrogate);
        spectrum = sys.solve_spectrum(&gx, &gy, term, g, b)?;
        latent = ifft2(&spectrum)?;
        observer(&HqsState {
            latent: latent.clone(),
            gx,
            gy,
            h,
            gamma: g,
            beta: b,
        });
        let done = gamma >= cap && (rft_surrogate.is_none() || beta >= cap);
        if done {
            break;
        }
        gamma *= cfg.penalty_growth;
        beta *= cfg.penalty_growth;
    }
    Ok(latent.clamp01())
}

/// `rft` of an image whose spectrum is already at hand.
fn rft_of_spectrum(spec: &Spectrum, img: &Image) -> Image {
    let (h, w) = spec.dims();
    let clipped: Vec<Complex64> = spec
        .data()
        .iter()
        .map(|c| Complex64::new(c.re.max(0.0), c.im.max(0.0)))
        .collect();
    let back = ifft2_real(&Spectrum::new(h, w, clipped).expect("dims"));
    debug_assert!({
        let direct = rft(img);
        back.data()
            .iter()
            .zip(img.data())
            .zip(direct.data())
            .all(|((r, v), d)| (r - 0.5 * v - d).abs() < 1e-8)
    });
    back.zip_map(img, |r, v| r - 0.5 * v).expect("same dims")
}
