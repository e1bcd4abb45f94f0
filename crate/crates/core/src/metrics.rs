//! Image and kernel quality metrics: PSNR, SSIM, error ratio and kernel
//! similarity, plus the translation search used to align results before
//! scoring.

use crate::error::{ensure_same_dims, DeblurError, Result};
use crate::image::Image;
use crate::kernel::Kernel;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn sse(a: &Image, b: &Image) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Peak signal-to-noise ratio for unit dynamic range. Identical images give
/// `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    ensure_same_dims("psnr", a.dims(), b.dims())?;
    let mse = sse(a, b) / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// A result translated to best match a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub image: Image,
    /// `(dy, dx)` with `image(y, x) = result(y + dy, x + dx)` (circular).
    pub shift: (isize, isize),
    pub psnr: f64,
}

/// Exhaustive search over circular integer translations within
/// `[-max_shift, max_shift]²` for the one with the highest PSNR. Ties go to
/// the smallest L1 shift, then to row-major order.
pub fn align_for_metric(result: &Image, reference: &Image, max_shift: usize) -> Result<Alignment> {
    ensure_same_dims("alignment", result.dims(), reference.dims())?;
    let (h, w) = result.dims();
    let m = max_shift as isize;
    let mut candidates: Vec<(isize, isize)> = Vec::with_capacity(((2 * m + 1) * (2 * m + 1)) as usize);
    for dy in -m..=m {
        for dx in -m..=m {
            candidates.push((dy, dx));
        }
    }
    candidates.sort_by_key(|&(dy, dx)| dy.abs() + dx.abs());

    let (r, refd) = (result.data(), reference.data());
    let mut best: Option<((isize, isize), f64)> = None;
    for &(dy, dx) in &candidates {
        let mut err = 0.0;
        for y in 0..h {
            let sy = (y as isize + dy).rem_euclid(h as isize) as usize;
            for x in 0..w {
                let sx = (x as isize + dx).rem_euclid(w as isize) as usize;
                let d = r[sy * w + sx] - refd[y * w + x];
                err += d * d;
            }
        }
        let better = match best {
            None => true,
            Some(((by, bx), be)) => {
                err < be || (err == be && dy.abs() + dx.abs() == by.abs() + bx.abs() && (dy, dx) < (by, bx))
            }
        };
        if better {
            best = Some(((dy, dx), err));
        }
    }
    let ((dy, dx), _) = best.expect("at least the zero shift is searched");
    let image = result.circular_shift(-dy, -dx);
    let psnr = psnr(&image, reference)?;
    Ok(Alignment {
        image,
        shift: (dy, dx),
        psnr,
    })
}

/// Fractional offsets searched by [`align_subpixel`] in each axis.
const SUBPIXEL_OFFSETS: [f64; 9] = [-0.6, -0.45, -0.3, -0.15, 0.0, 0.15, 0.3, 0.45, 0.6];

/// A result translated by a possibly fractional offset.
#[derive(Debug, Clone, PartialEq)]
pub struct SubpixelAlignment {
    pub image: Image,
    /// `(dy, dx)` with `image(y, x) ≈ result(y + dy, x + dx)` (circular,
    /// bilinear).
    pub shift: (f64, f64),
    pub psnr: f64,
}

/// Circular bilinear translation, `out(y, x) = img(y + ty, x + tx)` for
/// `|ty|, |tx| ≤ 1`.
fn translate_bilinear(img: &Image, ty: f64, tx: f64) -> Image {
    let (h, w) = img.dims();
    let (ay, ax) = (ty.abs(), tx.abs());
    let (sy, sx) = (if ty < 0.0 { h - 1 } else { 1 }, if tx < 0.0 { w - 1 } else { 1 });
    Image::from_fn(h, w, |y, x| {
        let y1 = (y + sy) % h;
        let x1 = (x + sx) % w;
        let top = (1.0 - ax) * img.get(y, x) + ax * img.get(y, x1);
        let bot = (1.0 - ax) * img.get(y1, x) + ax * img.get(y1, x1);
        (1.0 - ay) * top + ay * bot
    })
}

/// [`align_for_metric`] refined by a search over fractional offsets in
/// `[-0.6, 0.6]²` (steps of 0.15 px, bilinear interpolation), as in the
/// usual blind-deconvolution benchmark protocol. The zero offset is part
/// of the search, so the PSNR never falls below the integer alignment.
pub fn align_subpixel(result: &Image, reference: &Image, max_shift: usize) -> Result<SubpixelAlignment> {
    let coarse = align_for_metric(result, reference, max_shift)?;
    let mut best = (coarse.psnr, 0.0, 0.0, None);
    for &ty in &SUBPIXEL_OFFSETS {
        for &tx in &SUBPIXEL_OFFSETS {
            if ty == 0.0 && tx == 0.0 {
                continue;
            }
            let moved = translate_bilinear(&coarse.image, ty, tx);
            let p = psnr(&moved, reference)?;
            if p > best.0 {
                best = (p, ty, tx, Some(moved));
            }
        }
    }
    let (p, ty, tx, image) = best;
    Ok(SubpixelAlignment {
        image: image.unwrap_or(coarse.image),
        shift: (coarse.shift.0 as f64 + ty, coarse.shift.1 as f64 + tx),
        psnr: p,
    })
}

/// How a result is registered to the reference before it is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Registration {
    /// [`align_for_metric`].
    #[default]
    Integer,
    /// [`align_subpixel`].
    Subpixel,
}

/// Registers `result` to `reference` with the chosen method.
pub fn register(result: &Image, reference: &Image, max_shift: usize, mode: Registration) -> Result<Image> {
    Ok(match mode {
        Registration::Integer => align_for_metric(result, reference, max_shift)?.image,
        Registration::Subpixel => align_subpixel(result, reference, max_shift)?.image,
    })
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering with the SSIM window.
fn filter_valid(data: &[f64], h: usize, w: usize, win: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = win.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &wk) in win.iter().enumerate() {
                acc += wk * data[y * w + x + k];
            }
            rows[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &wk) in win.iter().enumerate() {
                acc += wk * rows[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    (out, oh, ow)
}

/// Mean SSIM over all fully contained 11×11 Gaussian windows (σ = 1.5,
/// K₁ = 0.01, K₂ = 0.03, unit dynamic range).
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ensure_same_dims("ssim", a.dims(), b.dims())?;
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(DeblurError::Dimension(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let win = gaussian_window();
    let (x, y) = (a.data(), b.data());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
    let (mx, _, _) = filter_valid(x, h, w, &win);
    let (my, _, _) = filter_valid(y, h, w, &win);
    let (sxx, _, _) = filter_valid(&xx, h, w, &win);
    let (syy, _, _) = filter_valid(&yy, h, w, &win);
    let (sxy, oh, ow) = filter_valid(&xy, h, w, &win);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for i in 0..oh * ow {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cov = sxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(total / (oh * ow) as f64)
}

/// Ratio of the aligned SSD of a blind result to that of the non-blind
/// result obtained with the true kernel, both against the sharp image.
pub fn error_ratio(deblur_est: &Image, deblur_gt: &Image, sharp: &Image, max_shift: usize) -> Result<f64> {
    error_ratio_registered(deblur_est, deblur_gt, sharp, max_shift, Registration::Integer)
}

/// [`error_ratio`] with a choice of registration.
pub fn error_ratio_registered(
    deblur_est: &Image,
    deblur_gt: &Image,
    sharp: &Image,
    max_shift: usize,
    mode: Registration,
) -> Result<f64> {
    ensure_same_dims("error ratio", deblur_est.dims(), sharp.dims())?;
    ensure_same_dims("error ratio", deblur_gt.dims(), sharp.dims())?;
    let num = sse(&register(deblur_est, sharp, max_shift, mode)?, sharp);
    let den = sse(&register(deblur_gt, sharp, max_shift, mode)?, sharp);
    if num == den {
        return Ok(1.0);
    }
    if den == 0.0 {
        return Err(DeblurError::DegenerateInput(
            "reference deconvolution matches the sharp image exactly".into(),
        ));
    }
    Ok(num / den)
}

/// Embeds `k` centered in a zero `size`×`size` canvas, scaled to peak 1.
fn peak_normalized_canvas(k: &Kernel, size: usize) -> Image {
    let off = (size - k.size()) / 2;
    let peak = k.max();
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    let mut img = Image::zeros(size, size);
    for i in 0..k.size() {
        for j in 0..k.size() {
            img.set(i + off, j + off, k.get(i, j) * scale);
        }
    }
    img
}

fn image_centroid(img: &Image) -> (f64, f64) {
    let (mut s, mut cy, mut cx) = (0.0, 0.0, 0.0);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let v = img.get(y, x);
            s += v;
            cy += v * y as f64;
            cx += v * x as f64;
        }
    }
    if s > 0.0 {
        (cy / s, cx / s)
    } else {
        (0.0, 0.0)
    }
}

/// Zero-filled integer translation, `out(y, x) = img(y - dy, x - dx)`.
fn shift_zero_fill(img: &Image, dy: isize, dx: isize) -> Image {
    let (h, w) = img.dims();
    Image::from_fn(h, w, |y, x| {
        let (sy, sx) = (y as isize - dy, x as isize - dx);
        if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
            0.0
        } else {
            img.get(sy as usize, sx as usize)
        }
    })
}

/// SSIM between two kernels after embedding both in a common zero canvas
/// (the larger side, at least the SSIM window), scaling each to peak 1 and
/// aligning the estimate's centroid onto the reference's.
pub fn kernel_similarity(k_est: &Kernel, k_gt: &Kernel) -> Result<f64> {
    let mut size = k_est.size().max(k_gt.size()).max(SSIM_WINDOW);
    if size.is_multiple_of(2) {
        size += 1;
    }
    let est = peak_normalized_canvas(k_est, size);
    let gt = peak_normalized_canvas(k_gt, size);
    let (ey, ex) = image_centroid(&est);
    let (gy, gx) = image_centroid(&gt);
    let aligned = shift_zero_fill(&est, (gy - ey).round() as isize, (gx - ex).round() as isize);
    ssim(&aligned, &gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, |_, _| rng.random::<f64>())
    }

    fn smooth_periodic(h: usize, w: usize, dy: f64, dx: f64) -> Image {
        let t = std::f64::consts::TAU;
        Image::from_fn(h, w, |y, x| {
            let (fy, fx) = ((y as f64 - dy) / h as f64, (x as f64 - dx) / w as f64);
            0.5 + 0.25 * (t * fy).sin() + 0.2 * (t * fx).cos() + 0.05 * (t * (fy + fx)).sin()
        })
    }

    #[test]
    fn subpixel_alignment_recovers_fractional_shift() {
        let sharp = smooth_periodic(48, 48, 0.0, 0.0);
        // result(y, x) = sharp(y - 2.3, x + 1.45): registration moves it
        // back by (2.3, -1.45).
        let result = smooth_periodic(48, 48, 2.3, -1.45);
        let coarse = align_for_metric(&result, &sharp, 4).unwrap();
        let fine = align_subpixel(&result, &sharp, 4).unwrap();
        assert!(fine.psnr > coarse.psnr + 10.0, "{} vs {}", fine.psnr, coarse.psnr);
        assert!(
            (fine.shift.0 - 2.3).abs() < 0.08 && (fine.shift.1 + 1.45).abs() < 0.08,
            "{:?}",
            fine.shift
        );
        assert_eq!(
            register(&result, &sharp, 4, Registration::Integer).unwrap(),
            coarse.image
        );
        assert_eq!(
            register(&result, &sharp, 4, Registration::Subpixel).unwrap(),
            fine.image
        );
    }

    #[test]
    fn subpixel_alignment_never_worse_than_integer() {
        for seed in 0..4 {
            let a = random_image(20, 20, seed);
            let b = random_image(20, 20, seed + 10);
            let coarse = align_for_metric(&a, &b, 2).unwrap();
            let fine = align_subpixel(&a, &b, 2).unwrap();
            assert!(fine.psnr >= coarse.psnr);
            assert!((psnr(&fine.image, &b).unwrap() - fine.psnr).abs() < 1e-9);
        }
    }

    #[test]
    fn translate_bilinear_integer_step_is_roll() {
        let a = random_image(5, 6, 3);
        let moved = translate_bilinear(&a, 1.0, -1.0);
        for y in 0..5 {
            for x in 0..6 {
                assert!((moved.get(y, x) - a.get((y + 1) % 5, (x + 5) % 6)).abs() < 1e-15);
            }
        }
        assert_eq!(translate_bilinear(&a, 0.0, 0.0), a);
    }

    #[test]
    fn registered_error_ratio_modes() {
        let sharp = random_image(16, 16, 1);
        let est = sharp.map(|v| v + 0.02);
        let gt = sharp.map(|v| v + 0.01);
        let plain = error_ratio(&est, &gt, &sharp, 2).unwrap();
        assert_eq!(
            plain,
            error_ratio_registered(&est, &gt, &sharp, 2, Registration::Integer).unwrap()
        );
        assert!((plain - 4.0).abs() < 1e-9);
        assert_eq!(
            error_ratio_registered(&est, &est, &sharp, 2, Registration::Subpixel).unwrap(),
            1.0
        );
    }

    #[test]
    fn psnr_values() {
        let a = random_image(8, 8, 1);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        assert!(psnr(&a, &Image::zeros(8, 9)).is_err());
    }

    #[test]
    fn alignment_recovers_shift() {
        let a = random_image(20, 24, 2);
        let same = align_for_metric(&a, &a, 3).unwrap();
        assert_eq!(same.shift, (0, 0));
        let reference = a.circular_shift(3, -2);
        let al = align_for_metric(&a, &reference, 5).unwrap();
        assert_eq!(al.shift, (-3, 2));
        assert_eq!(al.psnr, f64::INFINITY);
        assert_eq!(al.image, reference);
    }

    #[test]
    fn alignment_attains_exhaustive_maximum() {
        for seed in 0..5 {
            let a = random_image(12, 10, seed);
            let b = random_image(12, 10, seed + 100);
            let al = align_for_metric(&a, &b, 2).unwrap();
            let mut best = f64::NEG_INFINITY;
            for dy in -2isize..=2 {
                for dx in -2isize..=2 {
                    best = best.max(psnr(&a.circular_shift(-dy, -dx), &b).unwrap());
                }
            }
            assert!((al.psnr - best).abs() < 1e-12);
            assert!(al.psnr >= psnr(&a, &b).unwrap());
        }
    }

    #[test]
    fn ssim_identities() {
        let a = random_image(16, 16, 3);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let b = random_image(16, 16, 4);
        let s = ssim(&a, &b).unwrap();
        assert!((-1.0..0.2).contains(&s));
        assert!(ssim(&Image::zeros(10, 20), &Image::zeros(10, 20)).is_err());
    }

    /// Direct per-window SSIM with explicit 2D Gaussian weights.
    #[test]
    fn ssim_matches_reference_formula() {
        let a = random_image(14, 13, 5);
        let b = a.zip_map(&random_image(14, 13, 6), |x, y| 0.7 * x + 0.3 * y).unwrap();
        let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
        let gs: f64 = g.iter().sum::<f64>().powi(2);
        let (c1, c2) = (1e-4, 9e-4);
        let mut total = 0.0;
        let mut count = 0;
        for oy in 0..=3 {
            for ox in 0..=2 {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let wgt = g[i] * g[j] / gs;
                        let (x, y) = (a.get(oy + i, ox + j), b.get(oy + i, ox + j));
                        mx += wgt * x;
                        my += wgt * y;
                        sxx += wgt * x * x;
                        syy += wgt * y * y;
                        sxy += wgt * x * y;
                    }
                }
                let (vx, vy, cv) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                total += ((2.0 * mx * my + c1) * (2.0 * cv + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        assert!((ssim(&a, &b).unwrap() - total / count as f64).abs() < 1e-12);
    }

    #[test]
    fn error_ratio_identities() {
        let sharp = random_image(16, 16, 7);
        let x = random_image(16, 16, 8);
        assert_eq!(error_ratio(&x, &x, &sharp, 2).unwrap(), 1.0);
        assert_eq!(error_ratio(&sharp, &x, &sharp, 2).unwrap(), 0.0);
        assert!(error_ratio(&x, &sharp, &sharp, 2).is_err());
    }

    #[test]
    fn kernel_similarity_values() {
        let mut raw = vec![0.0; 49];
        for (i, v) in [(10, 0.2), (16, 0.3), (24, 0.3), (32, 0.2)] {
            raw[i] = v;
        }
        let k = Kernel::new(7, raw.clone()).unwrap();
        assert_eq!(kernel_similarity(&k, &k).unwrap(), 1.0);

        let s = kernel_similarity(&Kernel::delta(15), &Kernel::uniform(15)).unwrap();
        assert!(s < 0.3, "{s}");

        // The same shape moved one pixel up and left, without wrapping.
        let mut moved = vec![0.0; 49];
        for (i, v) in [(10, 0.2), (16, 0.3), (24, 0.3), (32, 0.2)] {
            moved[i - 8] = v;
        }
        let m = Kernel::new(7, moved).unwrap();
        assert!((kernel_similarity(&m, &k).unwrap() - 1.0).abs() < 1e-12);
    }
}
