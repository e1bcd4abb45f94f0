//! The FFT-ReLU transform, its L0 sparsity statistic and the diagonal
//! linear surrogate fitted to it with Adam.
//!
//! `rft(I) = Re(ifft2(relu(fft2(I)))) - I/2`, where the ReLU clips the real
//! and imaginary parts of every bin separately. The clipped spectrum is not
//! Hermitian, so the inverse transform has a genuine imaginary part; taking
//! the real part is the same as inverting the Hermitian half of the clipped
//! spectrum, which works out to `ifft2(|Re fft2(I)|) / 2`.

use num_complex::Complex64;
use serde::Serialize;

use crate::config::SolverConfig;
use crate::error::{ensure_same_dims, DeblurError, Result};
use crate::image::Image;
use crate::spectral::{fft2, ifft2, ifft2_real, mirror_index, Spectrum};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Fitting stops once an accepted step improves the objective by less than
/// this fraction.
const MIN_REL_IMPROVEMENT: f64 = 1e-4;

fn relu_complex(c: Complex64) -> Complex64 {
    Complex64::new(c.re.max(0.0), c.im.max(0.0))
}

/// The FFT-ReLU transform.
pub fn rft(img: &Image) -> Image {
    let spec = fft2(img);
    let (h, w) = spec.dims();
    let clipped =
        Spectrum::new(h, w, spec.data().iter().map(|&c| relu_complex(c)).collect()).expect("dimensions preserved");
    let back = ifft2_real(&clipped);
    back.zip_map(img, |r, v| r - 0.5 * v).expect("same dims")
}

/// Thresholded L0 count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SparsityStats {
    pub l0_count: usize,
    pub total_pixels: usize,
    pub epsilon: f64,
}

/// Counts pixels with `|value| > eps`.
pub fn l0_count(img: &Image, eps: f64) -> SparsityStats {
    SparsityStats {
        l0_count: img.data().iter().filter(|v| v.abs() > eps).count(),
        total_pixels: img.len(),
        epsilon: eps,
    }
}

/// A convolution operator `F` (one complex multiplier per frequency bin)
/// standing in for the nonlinear transform inside the closed-form latent
/// update.
#[derive(Debug, Clone, PartialEq)]
pub struct RftSurrogate {
    multiplier: Spectrum,
}

impl RftSurrogate {
    pub fn new(multiplier: Spectrum) -> Self {
        RftSurrogate { multiplier }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        RftSurrogate {
            multiplier: Spectrum::zeros(height, width),
        }
    }

    pub fn identity(height: usize, width: usize) -> Self {
        let data = vec![Complex64::new(1.0, 0.0); height * width];
        RftSurrogate {
            multiplier: Spectrum::new(height, width, data).expect("dims"),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.multiplier.dims()
    }

    pub fn multiplier(&self) -> &Spectrum {
        &self.multiplier
    }
}

/// `Re(ifft2(F ⊙ fft2(img)))`, with a residue check.
pub fn apply_surrogate(f: &RftSurrogate, img: &Image) -> Result<Image> {
    ensure_same_dims("surrogate", f.dims(), img.dims())?;
    ifft2(&fft2(img).mul(&f.multiplier)?)
}

/// Outcome of a surrogate fit, with the per-step relative residual
/// `‖F·I − rft(I)‖ / ‖rft(I)‖` (index 0 is the all-zero start).
#[derive(Debug, Clone)]
pub struct SurrogateFit {
    pub surrogate: RftSurrogate,
    pub residual_history: Vec<f64>,
    /// Residual of the returned multiplier, the best iterate seen.
    pub final_residual: f64,
    pub steps: usize,
}

/// Fits the surrogate multiplier by Adam on the least-squares objective.
pub fn fit_surrogate(img: &Image, cfg: &SolverConfig) -> Result<RftSurrogate> {
    Ok(fit_surrogate_traced(img, cfg)?.surrogate)
}

/// Same as [`fit_surrogate`], returning the residual trace.
///
/// The objective is evaluated in the frequency domain: for a Hermitian
/// multiplier the surrogate output is real, so by Parseval
/// `‖F·I − R‖² = (1/N) Σ |m·X − R̂|²`. Each bin is an independent complex
/// least-squares problem whose gradient is taken analytically.
pub fn fit_surrogate_traced(img: &Image, cfg: &SolverConfig) -> Result<SurrogateFit> {
    if cfg.adam_steps < 1 {
        return Err(DeblurError::config("adam_steps", "must be at least 1"));
    }
    let (h, w) = img.dims();
    let n = h * w;
    let x = fft2(img);
    let target = fft2(&rft(img));
    let (xs, ts) = (x.data(), target.data());
    let norm = 1.0 / n as f64;
    let target_energy: f64 = ts.iter().map(|c| c.norm_sqr()).sum::<f64>() * norm;

    let objective = |m: &[Complex64]| -> f64 {
        m.iter()
            .zip(xs)
            .zip(ts)
            .map(|((m, x), t)| (m * x - t).norm_sqr())
            .sum::<f64>()
            * norm
    };
    let rel = |obj: f64| {
        if target_energy > 0.0 {
            (obj / target_energy).sqrt()
        } else {
            obj.sqrt()
        }
    };

    let mut m = vec![Complex64::new(0.0, 0.0); n];
    let mut first = vec![Complex64::new(0.0, 0.0); n];
    let mut second = vec![Complex64::new(0.0, 0.0); n];
    let mut obj = objective(&m);
    let mut best = (obj, m.clone());
    let mut history = vec![rel(obj)];
    let mut steps = 0;

    if obj > 0.0 {
        for step in 1..=cfg.adam_steps {
            let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
            let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
            for i in 0..n {
                let g = xs[i].conj() * (m[i] * xs[i] - ts[i]) * (2.0 * norm);
                first[i] = first[i] * ADAM_BETA1 + g * (1.0 - ADAM_BETA1);
                second[i] = Complex64::new(
                    ADAM_BETA2 * second[i].re + (1.0 - ADAM_BETA2) * g.re * g.re,
                    ADAM_BETA2 * second[i].im + (1.0 - ADAM_BETA2) * g.im * g.im,
                );
                let (mh, vh) = (first[i] / bc1, second[i] / bc2);
                m[i] -= Complex64::new(
                    cfg.adam_lr * mh.re / (vh.re.sqrt() + ADAM_EPS),
                    cfg.adam_lr * mh.im / (vh.im.sqrt() + ADAM_EPS),
                );
            }
            hermitian_symmetrize(&mut m, h, w);
            let next = objective(&m);
            if !next.is_finite() {
                return Err(DeblurError::Numeric(format!(
                    "surrogate objective became non-finite at step {step}"
                )));
            }
            history.push(rel(next));
            steps = step;
            if next < best.0 {
                best = (next, m.clone());
            }
            let improvement = (obj - next) / obj;
            obj = next;
            if obj == 0.0 || (0.0..MIN_REL_IMPROVEMENT).contains(&improvement) {
                break;
            }
        }
    }

    Ok(SurrogateFit {
        surrogate: RftSurrogate::new(Spectrum::new(h, w, best.1)?),
        residual_history: history,
        final_residual: rel(best.0),
        steps,
    })
}

fn hermitian_symmetrize(m: &mut [Complex64], h: usize, w: usize) {
    for i in 0..m.len() {
        let j = mirror_index(i, h, w);
        if j < i {
            continue;
        }
        let avg = (m[i] + m[j].conj()) * 0.5;
        m[i] = avg;
        m[j] = avg.conj();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, |_, _| rng.random::<f64>())
    }

    /// Smooth-ish test scene: a few bars and a disc.
    fn scene(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, |y, x| {
            let (fy, fx) = (y as f64 / h as f64, x as f64 / w as f64);
            let disc = if (fy - 0.6).powi(2) + (fx - 0.4).powi(2) < 0.04 {
                0.5
            } else {
                0.0
            };
            let bars = if (x / 5) % 3 == 0 && fy < 0.4 { 0.3 } else { 0.1 };
            (disc + bars + 0.1 * (fx * 7.0).sin()).clamp(0.0, 1.0)
        })
    }

    fn norm(img: &Image) -> f64 {
        img.data().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn rft_of_zero_and_constant() {
        assert!(rft(&Image::zeros(6, 5)).data().iter().all(|&v| v == 0.0));
        let out = rft(&Image::filled(8, 8, 0.5));
        assert!(out.data().iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn rft_equals_half_inverse_of_abs_real_part() {
        let img = random_image(9, 12, 4);
        let spec = fft2(&img);
        let (h, w) = spec.dims();
        let abs_re = Spectrum::new(
            h,
            w,
            spec.data().iter().map(|c| Complex64::new(c.re.abs(), 0.0)).collect(),
        )
        .unwrap();
        let want = ifft2(&abs_re).unwrap().map(|v| 0.5 * v);
        let got = rft(&img);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn l0_examples() {
        assert_eq!(l0_count(&Image::zeros(4, 4), 1e-3).l0_count, 0);
        let img = Image::new(1, 3, vec![0.5, 1e-6, -0.2]).unwrap();
        let s = l0_count(&img, 1e-3);
        assert_eq!((s.l0_count, s.total_pixels), (2, 3));
    }

    #[test]
    fn surrogate_application() {
        let img = random_image(6, 7, 2);
        let zero = apply_surrogate(&RftSurrogate::zeros(6, 7), &img).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
        let id = apply_surrogate(&RftSurrogate::identity(6, 7), &img).unwrap();
        for (a, b) in id.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(apply_surrogate(&RftSurrogate::zeros(6, 6), &img).is_err());
    }

    #[test]
    fn surrogate_is_linear() {
        let cfg = SolverConfig::default();
        let f = fit_surrogate(&scene(16, 16), &cfg).unwrap();
        let (a, b) = (random_image(16, 16, 1), random_image(16, 16, 2));
        let comb = a.zip_map(&b, |x, y| 1.5 * x - 0.25 * y).unwrap();
        let lhs = apply_surrogate(&f, &comb).unwrap();
        let (fa, fb) = (apply_surrogate(&f, &a).unwrap(), apply_surrogate(&f, &b).unwrap());
        for i in 0..lhs.len() {
            let want = 1.5 * fa.data()[i] - 0.25 * fb.data()[i];
            assert!((lhs.data()[i] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn fit_on_zero_and_constant_images() {
        let cfg = SolverConfig::default();
        let fit = fit_surrogate_traced(&Image::zeros(8, 8), &cfg).unwrap();
        assert_eq!(fit.final_residual, 0.0);
        assert!(fit.surrogate.multiplier().data().iter().all(|c| c.norm() == 0.0));

        let c = Image::filled(8, 8, 0.6);
        let fit = fit_surrogate_traced(&c, &cfg).unwrap();
        let target = rft(&c);
        let approx = apply_surrogate(&fit.surrogate, &c).unwrap();
        let resid = norm(&approx.zip_map(&target, |a, b| a - b).unwrap());
        assert!(resid <= 1e-3 * norm(&target), "residual {resid}");
    }

    #[test]
    fn fit_reduces_residual_on_structured_image() {
        let fit = fit_surrogate_traced(&scene(64, 64), &SolverConfig::default()).unwrap();
        assert!(fit.final_residual <= 0.2, "{}", fit.final_residual);
        assert!(fit.final_residual <= fit.residual_history[0]);
        assert!(fit.surrogate.multiplier().hermitian_defect() < 1e-12);
    }

    #[test]
    fn fit_gradient_matches_finite_differences() {
        // Perturb one multiplier bin (and its mirror) and compare the
        // objective change against the analytic gradient used by Adam.
        let img = random_image(6, 6, 9);
        let (x, t) = (fft2(&img), fft2(&rft(&img)));
        let n = 36.0;
        let mut m: Vec<Complex64> = (0..36).map(|i| Complex64::new(0.1 * i as f64 % 0.7, 0.0)).collect();
        hermitian_symmetrize(&mut m, 6, 6);
        let obj = |m: &[Complex64]| -> f64 {
            m.iter()
                .zip(x.data())
                .zip(t.data())
                .map(|((m, x), t)| (m * x - t).norm_sqr())
                .sum::<f64>()
                / n
        };
        let i = 7;
        let g = x.data()[i].conj() * (m[i] * x.data()[i] - t.data()[i]) * (2.0 / n);
        let h = 1e-6;
        let mut plus = m.clone();
        plus[i].re += h;
        let mut minus = m.clone();
        minus[i].re -= h;
        let fd_re = (obj(&plus) - obj(&minus)) / (2.0 * h);
        let mut plus = m.clone();
        plus[i].im += h;
        let mut minus = m.clone();
        minus[i].im -= h;
        let fd_im = (obj(&plus) - obj(&minus)) / (2.0 * h);
        assert!((fd_re - g.re).abs() < 1e-6);
        assert!((fd_im - g.im).abs() < 1e-6);
    }

    #[test]
    fn fit_is_deterministic() {
        let img = scene(24, 20);
        let cfg = SolverConfig::default();
        assert_eq!(fit_surrogate(&img, &cfg).unwrap(), fit_surrogate(&img, &cfg).unwrap());
    }

    #[test]
    fn blur_reduces_rft_sparsity() {
        let sharp = scene(64, 64);
        let blurred = crate::spectral::convolve(&sharp, &crate::kernel::Kernel::uniform(11)).unwrap();
        assert!(l0_count(&rft(&blurred), 1e-3).l0_count > l0_count(&rft(&sharp), 1e-3).l0_count);
    }

    proptest! {
        #[test]
        fn rft_positive_homogeneity(seed in 0u64..200, c in 0.01f64..20.0) {
            let img = random_image(10, 9, seed);
            let a = rft(&img.map(|v| c * v));
            let b = rft(&img).map(|v| c * v);
            let scale = b.max_abs().max(1e-12);
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - y).abs() <= 1e-9 * scale);
            }
        }
    }
}
