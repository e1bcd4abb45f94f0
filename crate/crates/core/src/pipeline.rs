//! End-to-end deblurring: coarse-to-fine blind kernel estimation followed
//! by non-blind deconvolution with ringing suppression.

use std::time::Instant;

use serde::Serialize;

use crate::config::SolverConfig;
use crate::error::{ensure_same_dims, DeblurError, Result};
use crate::image::{build_scale_schedule, gradients, pad_periodic_to, resample, to_grayscale, ColorImage, Image};
use crate::kernel::{center_kernel, estimate_kernel, remove_isolated_noise, upsample_kernel, Kernel};
use crate::latent::solve_latent;
use crate::rft::fit_surrogate;
use crate::spectral::{fast_len, fft2, gradient_otfs, ifft2, psf_to_otf, Spectrum};

/// Wall-clock seconds spent in each stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTiming {
    pub blind_seconds: f64,
    pub nonblind_seconds: f64,
}

impl StageTiming {
    pub fn total(&self) -> f64 {
        self.blind_seconds + self.nonblind_seconds
    }
}

#[derive(Debug, Clone)]
pub struct DeblurResult {
    pub latent: ColorImage,
    pub kernel: Kernel,
    /// Final kernel of every pyramid level, coarsest first.
    pub per_scale_kernels: Vec<Kernel>,
    /// Grayscale latent from the last blind iteration, before the
    /// non-blind pass.
    pub intermediate: Image,
    pub timing: StageTiming,
}

/// Coarsest-level starting kernel: two adjacent half-weights at the center.
pub fn kernel_init() -> Kernel {
    let mut data = vec![0.0; 9];
    data[4] = 0.5;
    data[5] = 0.5;
    Kernel::new(3, data).expect("3x3 kernel")
}

/// Periodic padding by at least `pad` on each side, grown to sizes with
/// fast transforms.
fn pad_for_fft(img: &Image, pad: usize) -> Image {
    let (h, w) = img.dims();
    pad_periodic_to(img, pad, fast_len(h + 2 * pad), fast_len(w + 2 * pad))
}

/// Zeroes a gradient field outside the original image, i.e. in the padding
/// band and across the last row and column whose forward differences reach
/// into it.
fn mask_outside(mut grad: Image, pad: usize, h: usize, w: usize) -> Image {
    let width = grad.width();
    for (i, v) in grad.data_mut().iter_mut().enumerate() {
        let (y, x) = (i / width, i % width);
        if y < pad || y + 1 >= pad + h || x < pad || x + 1 >= pad + w {
            *v = 0.0;
        }
    }
    grad
}

fn crop_center(img: &Image, pad: usize, h: usize, w: usize) -> Image {
    img.crop(pad, pad, h, w).expect("padding is cropped back")
}

/// Fraction of the kernel peak below which estimated entries are dropped.
pub const KERNEL_FLOOR: f64 = 0.05;

/// Zeroes entries below `fraction` of the peak and renormalizes, so that
/// ridge noise does not bridge the kernel into a single component.
pub fn suppress_kernel_floor(k: &Kernel, fraction: f64) -> Result<Kernel> {
    let cut = fraction * k.max();
    let data = k.data().iter().map(|&v| if v < cut { 0.0 } else { v }).collect();
    crate::kernel::project_kernel(&Kernel::new(k.size(), data)?)
}

/// Blind stage only: returns the final kernel, the per-level kernels and
/// the grayscale intermediate latent.
pub fn estimate_blur(gray: &Image, cfg: &SolverConfig) -> Result<(Kernel, Vec<Kernel>, Image)> {
    cfg.validate()?;
    let (height, width) = gray.dims();
    if height.min(width) < 3 * cfg.kernel_size {
        return Err(DeblurError::DegenerateInput(format!(
            "{height}x{width} image is too small for a {0}x{0} kernel",
            cfg.kernel_size
        )));
    }
    let schedule = build_scale_schedule(cfg.kernel_size, cfg.min_kernel, cfg.scale_ratio)?;
    let mut k = kernel_init();
    let mut per_scale = Vec::with_capacity(schedule.levels.len());
    let mut intermediate = gray.clone();

    for (level_idx, level) in schedule.levels.iter().enumerate() {
        let stage = |e: DeblurError| e.in_stage(format!("scale level {level_idx}"));
        let lh = ((height as f64 * level.image_scale).round() as usize).max(level.kernel_size);
        let lw = ((width as f64 * level.image_scale).round() as usize).max(level.kernel_size);
        let blurred = resample(gray, lh, lw);
        if k.size() != level.kernel_size {
            k = upsample_kernel(&k, level.kernel_size).map_err(stage)?;
        }
        let pad = level.kernel_size / 2;
        let padded = pad_for_fft(&blurred, pad);
        let interior = |img: Image| mask_outside(img, pad, lh, lw);
        let (bx, by) = gradients(&padded);
        let (bx, by) = (interior(bx), interior(by));
        // The surrogate linearizes the transform around this level's
        // observation; refitting it to each latent estimate lets artefacts
        // of one iteration steer the next, which can make the kernel diverge.
        let surrogate = if cfg.lambda > 0.0 {
            Some(fit_surrogate(&padded, cfg).map_err(stage)?)
        } else {
            None
        };
        let mut latent = padded.clone();
        for _ in 0..cfg.max_iter {
            latent = solve_latent(&padded, &k, surrogate.as_ref(), cfg).map_err(stage)?;
            let (ix, iy) = gradients(&latent);
            k = estimate_kernel(&interior(ix), &interior(iy), &bx, &by, cfg.alpha, level.kernel_size).map_err(stage)?;
            k = suppress_kernel_floor(&k, KERNEL_FLOOR).map_err(stage)?;
            k = remove_isolated_noise(&k, cfg.cc_threshold).map_err(stage)?;
            k = center_kernel(&k);
        }
        intermediate = crop_center(&latent, pad, lh, lw);
        per_scale.push(k.clone());
    }
    Ok((k, per_scale, intermediate))
}

/// Multi-scale blind deconvolution. The kernel is estimated on luminance;
/// the returned latent comes from [`nonblind_deconvolve`] with that kernel.
pub fn blind_deconvolve(blurred: &ColorImage, cfg: &SolverConfig) -> Result<DeblurResult> {
    let start = Instant::now();
    let gray = to_grayscale(blurred);
    let (kernel, per_scale_kernels, intermediate) =
        estimate_blur(&gray, cfg).map_err(|e| e.in_stage("blind kernel estimation"))?;
    let blind_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let latent = nonblind_deconvolve(blurred, &kernel, cfg).map_err(|e| e.in_stage("non-blind deconvolution"))?;
    Ok(DeblurResult {
        latent,
        kernel,
        per_scale_kernels,
        intermediate,
        timing: StageTiming {
            blind_seconds,
            nonblind_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

/// Per channel: hyper-Laplacian deconvolution (`I₁`), L0-gradient
/// deconvolution without the RFT term and with gradient weight `nb_mu`
/// (`I₂`), then
/// `I₁ − bilateral(I₁ − I₂)`, clamped to [0, 1].
pub fn nonblind_deconvolve(blurred: &ColorImage, k: &Kernel, cfg: &SolverConfig) -> Result<ColorImage> {
    cfg.validate()?;
    let l0_only = SolverConfig {
        lambda: 0.0,
        mu: cfg.nb_mu,
        ..cfg.clone()
    };
    let pad = k.radius();
    let channels = blurred
        .channels()
        .iter()
        .map(|ch| {
            let (h, w) = ch.dims();
            let padded = pad_for_fft(ch, pad);
            let i1 = laplacian_prior_deconv(&padded, k, cfg.nb_weight, cfg.nb_exponent)?;
            let i2 = solve_latent(&padded, k, None, &l0_only)?;
            let out = suppress_ringing(&crop_center(&i1, pad, h, w), &crop_center(&i2, pad, h, w), cfg)?;
            Ok(out.clamp01())
        })
        .collect::<Result<Vec<_>>>()?;
    ColorImage::from_channels(channels)
}

/// Outer rounds of the hyper-Laplacian splitting.
const LAPLACIAN_ROUNDS: usize = 2;
const LAPLACIAN_PENALTY_INIT: f64 = 1.0;
const LAPLACIAN_PENALTY_GROWTH: f64 = 2.0;

/// Non-blind deconvolution under a hyper-Laplacian gradient prior,
/// `‖I⊗k − B‖² + w·Σ|∇I|^p`, by half-quadratic splitting.
///
/// The split objective is `‖I⊗k − B‖² + w·(Σ|v|^p + β/2·‖v − ∇I‖²)` with
/// `β` starting at 1 and doubling over four rounds. The `v` step uses a
/// lookup table of the scalar proximal map.
pub fn laplacian_prior_deconv(channel: &Image, k: &Kernel, nb_weight: f64, nb_exponent: f64) -> Result<Image> {
    if !(nb_exponent > 0.0 && nb_exponent <= 1.0) {
        return Err(DeblurError::config("nb_exponent", "must lie in (0, 1]"));
    }
    if nb_weight.is_nan() || nb_weight < 0.0 {
        return Err(DeblurError::config("nb_weight", "must be >= 0"));
    }
    let (h, w) = channel.dims();
    let otf = psf_to_otf(k, h, w)?;
    let fb = fft2(channel);
    let (dx, dy) = gradient_otfs(h, w);
    let n = h * w;
    let mut latent = channel.clone();
    let mut beta = LAPLACIAN_PENALTY_INIT;
    for _ in 0..LAPLACIAN_ROUNDS {
        let coupling = nb_weight * beta / 2.0;
        let (gx, gy) = gradients(&latent);
        let table = ProxTable::new(1.0 / beta, nb_exponent);
        let vx = gx.map(|v| table.apply(v));
        let vy = gy.map(|v| table.apply(v));
        let (fvx, fvy) = (fft2(&vx), fft2(&vy));
        let data = (0..n)
            .map(|i| {
                let kc = otf.data()[i];
                let num = kc.conj() * fb.data()[i]
                    + (dx.data()[i].conj() * fvx.data()[i] + dy.data()[i].conj() * fvy.data()[i]) * coupling;
                let den = kc.norm_sqr()
                    + coupling * (dx.data()[i].norm_sqr() + dy.data()[i].norm_sqr())
                    + crate::latent::DENOMINATOR_STABILIZER;
                num / den
            })
            .collect();
        latent = ifft2(&Spectrum::new(h, w, data)?)?;
        beta *= LAPLACIAN_PENALTY_GROWTH;
    }
    Ok(latent)
}

/// Exact minimizer of `t·|x|^p + ½(x − v)²` for `0 < p ≤ 1`.
pub fn hyper_laplacian_prox(v: f64, t: f64, p: f64) -> f64 {
    let a = v.abs();
    if a == 0.0 || t <= 0.0 {
        return v;
    }
    if p >= 1.0 {
        return v.signum() * (a - t).max(0.0);
    }
    // Stationary points satisfy x + t·p·x^(p−1) = a on x > 0; the left side
    // is convex with its minimum at x0.
    let x0 = (t * p * (1.0 - p)).powf(1.0 / (2.0 - p));
    let phi = |x: f64| x + t * p * x.powf(p - 1.0);
    if x0 >= a || phi(x0) >= a {
        return 0.0;
    }
    let (mut lo, mut hi) = (x0, a);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < a {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * a {
            break;
        }
    }
    let x = 0.5 * (lo + hi);
    let cost = |x: f64| t * x.powf(p) + 0.5 * (x - a).powi(2);
    if cost(x) < cost(0.0) {
        v.signum() * x
    } else {
        0.0
    }
}

/// Tabulated [`hyper_laplacian_prox`] for fixed `t` and `p`, linearly
/// interpolated, with exact evaluation beyond the table range.
struct ProxTable {
    t: f64,
    p: f64,
    step: f64,
    values: Vec<f64>,
}

impl ProxTable {
    const RANGE: f64 = 2.0;
    const ENTRIES: usize = 20_001;

    fn new(t: f64, p: f64) -> Self {
        let step = Self::RANGE / (Self::ENTRIES - 1) as f64;
        let values = (0..Self::ENTRIES)
            .map(|i| hyper_laplacian_prox(i as f64 * step, t, p))
            .collect();
        ProxTable { t, p, step, values }
    }

    fn apply(&self, v: f64) -> f64 {
        let a = v.abs();
        if a >= Self::RANGE {
            return hyper_laplacian_prox(v, self.t, self.p);
        }
        let pos = a / self.step;
        let i = pos.floor() as usize;
        let f = pos - i as f64;
        let out = self.values[i] * (1.0 - f) + self.values[i + 1] * f;
        v.signum() * out
    }
}

/// Bilateral filter with a Gaussian spatial kernel truncated at 3σₛ and a
/// Gaussian range kernel. Taps outside the image are skipped.
pub fn bilateral_filter(img: &Image, sigma_s: f64, sigma_r: f64) -> Image {
    assert!(sigma_s > 0.0 && sigma_r > 0.0, "bilateral sigmas must be positive");
    let (h, w) = img.dims();
    let radius = (3.0 * sigma_s).ceil() as isize;
    let side = (2 * radius + 1) as usize;
    let mut spatial = Vec::with_capacity(side * side);
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            spatial.push((-((dy * dy + dx * dx) as f64) / (2.0 * sigma_s * sigma_s)).exp());
        }
    }
    let range_coef = -1.0 / (2.0 * sigma_r * sigma_r);
    let d = img.data();
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        let y0 = (y - radius).max(0);
        let y1 = (y + radius).min(h as isize - 1);
        for x in 0..w as isize {
            let x0 = (x - radius).max(0);
            let x1 = (x + radius).min(w as isize - 1);
            let center = d[(y * w as isize + x) as usize];
            let (mut acc, mut norm) = (0.0, 0.0);
            for sy in y0..=y1 {
                let row = (sy * w as isize) as usize;
                let srow = ((sy - y + radius) as usize) * side;
                for sx in x0..=x1 {
                    let v = d[row + sx as usize];
                    let diff = v - center;
                    let wgt = spatial[srow + (sx - x + radius) as usize] * (range_coef * diff * diff).exp();
                    acc += wgt * v;
                    norm += wgt;
                }
            }
            out[(y * w as isize + x) as usize] = acc / norm;
        }
    }
    Image::from_vec_unchecked(h, w, out)
}

/// `I₁ − bilateral(I₁ − I₂)`.
pub fn suppress_ringing(i1: &Image, i2: &Image, cfg: &SolverConfig) -> Result<Image> {
    ensure_same_dims("ringing suppression", i1.dims(), i2.dims())?;
    let diff = i1.zip_map(i2, |a, b| a - b)?;
    let smooth = bilateral_filter(&diff, cfg.bilateral_sigma_s, cfg.bilateral_sigma_r);
    i1.zip_map(&smooth, |a, b| a - b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::convolve;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, |_, _| rng.random::<f64>())
    }

    fn max_diff(a: &Image, b: &Image) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn initial_kernel() {
        let k = kernel_init();
        assert!(k.is_normalized(1e-15));
        assert_ne!(k, Kernel::delta(3));
        let (cy, cx) = k.centroid();
        assert!((cy - 1.0).abs() <= 0.5 && (cx - 1.0).abs() <= 0.5);
    }

    #[test]
    fn masking_zeroes_everything_outside_the_interior() {
        let (pad, h, w) = (2, 4, 5);
        let g = mask_outside(Image::filled(h + 2 * pad, w + 2 * pad, 1.0), pad, h, w);
        for y in 0..h + 2 * pad {
            for x in 0..w + 2 * pad {
                // Forward differences of the last interior row and column
                // reach into the padding, so they are masked too.
                let inside = (pad..pad + h - 1).contains(&y) && (pad..pad + w - 1).contains(&x);
                assert_eq!(g.get(y, x), if inside { 1.0 } else { 0.0 }, "({y}, {x})");
            }
        }
    }

    #[test]
    fn kernel_floor_drops_faint_entries() {
        let mut data = vec![0.0; 9];
        data[4] = 0.6;
        data[5] = 0.38;
        data[0] = 0.02;
        let k = suppress_kernel_floor(&Kernel::new(3, data).unwrap(), KERNEL_FLOOR).unwrap();
        assert_eq!(k.data()[0], 0.0);
        assert!(k.is_normalized(1e-15));
        assert!((k.data()[4] / k.data()[5] - 0.6 / 0.38).abs() < 1e-12);
        let delta = Kernel::delta(5);
        assert_eq!(suppress_kernel_floor(&delta, KERNEL_FLOOR).unwrap(), delta);
    }

    #[test]
    fn prox_matches_grid_search() {
        let p = 2.0 / 3.0;
        for &t in &[0.05, 0.3, 1.0] {
            for i in 0..25 {
                let v = -1.2 + 0.1 * i as f64;
                let cost = |x: f64| t * x.abs().powf(p) + 0.5 * (x - v).powi(2);
                let mut best = (f64::INFINITY, 0.0);
                let steps = 300_000;
                for s in 0..=steps {
                    let x = -1.5 + 3.0 * s as f64 / steps as f64;
                    let c = cost(x);
                    if c < best.0 {
                        best = (c, x);
                    }
                }
                let got = hyper_laplacian_prox(v, t, p);
                assert!(
                    (got - best.1).abs() < 1e-4 || (cost(got) - best.0).abs() < 1e-12,
                    "v={v} t={t}: {got} vs {}",
                    best.1
                );
            }
        }
    }

    #[test]
    fn prox_table_tracks_exact_map() {
        let table = ProxTable::new(0.25, 2.0 / 3.0);
        for i in 0..400 {
            let v = -3.0 + 0.015 * i as f64;
            let exact = hyper_laplacian_prox(v, 0.25, 2.0 / 3.0);
            let thr_gap = (v.abs() - 0.75_f64).abs();
            if thr_gap > 0.01 {
                assert!((table.apply(v) - exact).abs() < 1e-3, "v={v}");
            }
        }
    }

    #[test]
    fn laplacian_identity_and_constants() {
        let b = random_image(16, 16, 1);
        let out = laplacian_prior_deconv(&b, &Kernel::delta(3), 0.0, 2.0 / 3.0).unwrap();
        assert!(max_diff(&out, &b) < 1e-8);
        let c = Image::filled(16, 16, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k =
            crate::kernel::project_kernel(&Kernel::new(5, (0..25).map(|_| rng.random()).collect()).unwrap()).unwrap();
        let out = laplacian_prior_deconv(&c, &k, 2e-3, 2.0 / 3.0).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn laplacian_deconvolution_improves_blurred_image() {
        let sharp = Image::from_fn(48, 48, |y, x| if (x / 8 + y / 12) % 2 == 0 { 0.8 } else { 0.2 });
        let k = Kernel::uniform(5);
        let blurred = convolve(&sharp, &k).unwrap();
        let out = laplacian_prior_deconv(&blurred, &k, 2e-3, 2.0 / 3.0).unwrap();
        let err = |a: &Image| {
            a.data()
                .iter()
                .zip(sharp.data())
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
        };
        assert!(err(&out) < 0.5 * err(&blurred));
    }

    #[test]
    fn bilateral_identities() {
        let c = Image::filled(12, 9, 0.6);
        assert!(max_diff(&bilateral_filter(&c, 2.0, 0.1), &c) < 1e-15);
        let z = Image::zeros(7, 7);
        assert_eq!(bilateral_filter(&z, 5.0, 0.1), z);
    }

    #[test]
    fn bilateral_with_huge_range_sigma_is_gaussian_blur() {
        let img = random_image(20, 17, 3);
        let sigma: f64 = 1.7;
        let r = (3.0 * sigma).ceil() as isize;
        let taps: Vec<f64> = (-r..=r)
            .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        // Separable, renormalized over in-bounds taps.
        let pass = |src: &Image, horizontal: bool| {
            Image::from_fn(src.height(), src.width(), |y, x| {
                let (mut acc, mut nrm) = (0.0, 0.0);
                for (i, &t) in taps.iter().enumerate() {
                    let d = i as isize - r;
                    let (sy, sx) = if horizontal {
                        (y as isize, x as isize + d)
                    } else {
                        (y as isize + d, x as isize)
                    };
                    if sy >= 0 && sx >= 0 && (sy as usize) < src.height() && (sx as usize) < src.width() {
                        acc += t * src.get(sy as usize, sx as usize);
                        nrm += t;
                    }
                }
                acc / nrm
            })
        };
        let oracle = pass(&pass(&img, true), false);
        assert!(max_diff(&bilateral_filter(&img, sigma, 1e6), &oracle) <= 1e-4);
    }

    #[test]
    fn ringing_suppression_identities() {
        let cfg = SolverConfig::default();
        let a = random_image(14, 14, 4);
        assert_eq!(suppress_ringing(&a, &a, &cfg).unwrap(), a);
        let shifted = a.map(|v| v + 0.05);
        let out = suppress_ringing(&a, &shifted, &cfg).unwrap();
        assert!(max_diff(&out, &shifted) < 1e-12);
        let b = random_image(14, 14, 5);
        let diff = a.zip_map(&b, |x, y| x - y).unwrap();
        let composed = a
            .zip_map(
                &bilateral_filter(&diff, cfg.bilateral_sigma_s, cfg.bilateral_sigma_r),
                |x, y| x - y,
            )
            .unwrap();
        assert_eq!(suppress_ringing(&a, &b, &cfg).unwrap(), composed);
        assert!(suppress_ringing(&a, &Image::zeros(3, 3), &cfg).is_err());
    }

    #[test]
    fn nonblind_identity() {
        // With an impulse kernel and both priors off, each branch returns
        // the observation and so does their combination.
        let cfg = SolverConfig {
            nb_weight: 0.0,
            nb_mu: 0.0,
            gamma_init: Some(1.0),
            ..SolverConfig::default()
        };
        let b = random_image(20, 20, 6);
        let out = nonblind_deconvolve(&ColorImage::gray(b.clone()), &Kernel::delta(5), &cfg).unwrap();
        assert!(max_diff(&out.channels()[0], &b) < 1e-6);
    }

    #[test]
    fn nonblind_improves_known_blur() {
        let sharp = Image::from_fn(64, 64, |y, x| {
            let disc = ((y as f64 - 30.0).powi(2) + (x as f64 - 34.0).powi(2)).sqrt() < 14.0;
            if disc {
                0.85
            } else if (x / 9) % 2 == 0 {
                0.35
            } else {
                0.15
            }
        });
        let mut raw = vec![0.0; 49];
        for j in 1..6 {
            raw[3 * 7 + j] = 1.0;
        }
        raw[2 * 7 + 5] = 1.0;
        let k = crate::kernel::project_kernel(&Kernel::new(7, raw).unwrap()).unwrap();
        let blurred = convolve(&sharp, &k).unwrap();
        let out = nonblind_deconvolve(&ColorImage::gray(blurred.clone()), &k, &SolverConfig::default()).unwrap();
        let before = crate::metrics::psnr(&blurred, &sharp).unwrap();
        let after = crate::metrics::psnr(&out.channels()[0], &sharp).unwrap();
        assert!(after >= before + 2.0, "{before} -> {after}");
    }

    #[test]
    fn blind_rejects_small_images() {
        let cfg = SolverConfig::default();
        let err = blind_deconvolve(&ColorImage::gray(Image::zeros(40, 40)), &cfg).unwrap_err();
        assert!(matches!(err.root(), DeblurError::DegenerateInput(_)));
    }
}
