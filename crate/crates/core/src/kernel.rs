//! Blur kernels: gradient-domain estimation and the post-processing chain
//! (projection onto the simplex, isolated-noise removal, centering and
//! upsampling between pyramid levels).

use std::collections::VecDeque;

use num_complex::Complex64;

use crate::error::{ensure_same_dims, DeblurError, Result};
use crate::image::{resample, Image};
use crate::spectral::{fft2, ifft2, Spectrum};

/// Square blur kernel (PSF), row-major.
///
/// Post-processed kernels are nonnegative, sum to one and have odd side;
/// raw rasters handed to [`project_kernel`] need not be.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    data: Vec<f64>,
}

impl Kernel {
    pub fn new(size: usize, data: Vec<f64>) -> Result<Self> {
        if size == 0 || data.len() != size * size {
            return Err(DeblurError::Dimension(format!(
                "{} weights for a {size}x{size} kernel",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DeblurError::Numeric("kernel contains non-finite values".into()));
        }
        Ok(Kernel { size, data })
    }

    /// Unit impulse at the center.
    pub fn delta(size: usize) -> Self {
        let mut data = vec![0.0; size * size];
        data[(size / 2) * size + size / 2] = 1.0;
        Kernel { size, data }
    }

    pub fn uniform(size: usize) -> Self {
        let v = 1.0 / (size * size) as f64;
        Kernel {
            size,
            data: vec![v; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mass centroid as (row, col).
    pub fn centroid(&self) -> (f64, f64) {
        let total = self.sum();
        let (mut cy, mut cx) = (0.0, 0.0);
        for i in 0..self.size {
            for j in 0..self.size {
                let v = self.get(i, j);
                cy += i as f64 * v;
                cx += j as f64 * v;
            }
        }
        (cy / total, cx / total)
    }

    pub fn to_image(&self) -> Image {
        Image::from_vec_unchecked(self.size, self.size, self.data.clone())
    }

    pub fn from_image(img: &Image) -> Result<Self> {
        if img.height() != img.width() {
            return Err(DeblurError::Dimension(format!(
                "kernel raster must be square, got {}x{}",
                img.height(),
                img.width()
            )));
        }
        Kernel::new(img.height(), img.data().to_vec())
    }

    /// True when the kernel is nonnegative, sums to one within `tol` and has
    /// an odd side.
    pub fn is_normalized(&self, tol: f64) -> bool {
        self.size % 2 == 1 && self.data.iter().all(|&v| v >= 0.0) && (self.sum() - 1.0).abs() <= tol
    }
}

/// Minimizer of `‖∇I ⊗ k − ∇B‖² + α‖k‖²` over full-support kernels, in the
/// wrapped layout (kernel center at index (0, 0)).
pub fn estimate_kernel_full(gix: &Image, giy: &Image, gbx: &Image, gby: &Image, alpha: f64) -> Result<Image> {
    ensure_same_dims("latent gradients", gix.dims(), giy.dims())?;
    ensure_same_dims("blurred gradient x", gix.dims(), gbx.dims())?;
    ensure_same_dims("blurred gradient y", gix.dims(), gby.dims())?;
    let energy: f64 = gix.data().iter().chain(giy.data()).map(|v| v * v).sum();
    if energy.is_nan() || energy <= 1e-12 {
        return Err(DeblurError::DegenerateInput(
            "latent image has no gradient energy".into(),
        ));
    }
    let (fix, fiy, fbx, fby) = (fft2(gix), fft2(giy), fft2(gbx), fft2(gby));
    let (h, w) = gix.dims();
    let data: Vec<Complex64> = (0..h * w)
        .map(|i| {
            let (ax, ay) = (fix.data()[i], fiy.data()[i]);
            let num = ax.conj() * fbx.data()[i] + ay.conj() * fby.data()[i];
            let den = ax.norm_sqr() + ay.norm_sqr() + alpha;
            if den > 0.0 {
                num / den
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    ifft2(&Spectrum::new(h, w, data)?)
}

/// Gradient-domain ridge estimate of a `ksize`×`ksize` kernel, projected
/// onto the simplex.
pub fn estimate_kernel(gix: &Image, giy: &Image, gbx: &Image, gby: &Image, alpha: f64, ksize: usize) -> Result<Kernel> {
    let (h, w) = gix.dims();
    if ksize.is_multiple_of(2) || ksize > h.min(w) {
        return Err(DeblurError::config(
            "kernel_size",
            format!("{ksize} must be odd and fit a {h}x{w} image"),
        ));
    }
    let full = estimate_kernel_full(gix, giy, gbx, gby, alpha)?;
    project_kernel(&crop_wrapped(&full, ksize))
}

/// Centered `size`×`size` window of a wrapped-layout raster.
pub(crate) fn crop_wrapped(full: &Image, size: usize) -> Kernel {
    let (h, w) = full.dims();
    let c = size / 2;
    let mut data = Vec::with_capacity(size * size);
    for i in 0..size {
        let y = (i + h - c) % h;
        for j in 0..size {
            data.push(full.get(y, (j + w - c) % w));
        }
    }
    Kernel { size, data }
}

/// Zeroes negative weights and rescales to unit sum.
pub fn project_kernel(k: &Kernel) -> Result<Kernel> {
    let data: Vec<f64> = k.data.iter().map(|&v| v.max(0.0)).collect();
    let sum: f64 = data.iter().sum();
    if !sum.is_finite() || sum <= 0.0 {
        return Err(DeblurError::DegenerateKernel(
            "no positive weight left after projection".into(),
        ));
    }
    Ok(Kernel {
        size: k.size,
        data: data.into_iter().map(|v| v / sum).collect(),
    })
}

/// 8-connected components of positive entries, as lists of flat indices.
pub fn kernel_components(k: &Kernel) -> Vec<Vec<usize>> {
    let n = k.size;
    let mut seen = vec![false; n * n];
    let mut comps = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n * n {
        if seen[start] || k.data[start] <= 0.0 {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Vec::new();
        while let Some(p) = queue.pop_front() {
            comp.push(p);
            let (py, px) = ((p / n) as isize, (p % n) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (y, x) = (py + dy, px + dx);
                    if y < 0 || x < 0 || y >= n as isize || x >= n as isize {
                        continue;
                    }
                    let q = y as usize * n + x as usize;
                    if !seen[q] && k.data[q] > 0.0 {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        comps.push(comp);
    }
    comps
}

/// Erases components lighter than `cc_threshold` times the heaviest one,
/// then renormalizes.
pub fn remove_isolated_noise(k: &Kernel, cc_threshold: f64) -> Result<Kernel> {
    if !(0.0..1.0).contains(&cc_threshold) {
        return Err(DeblurError::config("cc_threshold", "must lie in [0, 1)"));
    }
    let comps = kernel_components(k);
    let masses: Vec<f64> = comps.iter().map(|c| c.iter().map(|&p| k.data[p]).sum()).collect();
    let heaviest = masses.iter().cloned().fold(0.0, f64::max);
    let mut data = k.data.clone();
    for (comp, &mass) in comps.iter().zip(&masses) {
        if mass < cc_threshold * heaviest {
            for &p in comp {
                data[p] = 0.0;
            }
        }
    }
    project_kernel(&Kernel { size: k.size, data })
}

fn circular_shift(k: &Kernel, dy: isize, dx: isize) -> Kernel {
    let n = k.size as isize;
    let mut data = vec![0.0; k.data.len()];
    for i in 0..n {
        for j in 0..n {
            let y = (i + dy).rem_euclid(n) as usize;
            let x = (j + dx).rem_euclid(n) as usize;
            data[y * k.size + x] = k.data[(i * n + j) as usize];
        }
    }
    Kernel { size: k.size, data }
}

/// Integer shift that brings `centroid` within half a pixel of `center`;
/// exact half-pixel offsets resolve toward the negative direction.
fn centering_shift(center: f64, centroid: f64) -> isize {
    (center - centroid - 0.5 - 1e-9).ceil() as isize
}

/// Circularly shifts the kernel so its mass centroid sits within half a
/// pixel of the geometric center.
pub fn center_kernel(k: &Kernel) -> Kernel {
    let center = (k.size - 1) as f64 / 2.0;
    let mut out = k.clone();
    // Wrapped mass can move the centroid by a non-integer amount, so settle
    // over a few passes.
    for _ in 0..k.size {
        if !out.sum().is_finite() || out.sum() <= 0.0 {
            break;
        }
        let (cy, cx) = out.centroid();
        let (sy, sx) = (centering_shift(center, cy), centering_shift(center, cx));
        if sy == 0 && sx == 0 {
            break;
        }
        out = circular_shift(&out, sy, sx);
    }
    out
}

/// Bilinear resampling to a larger odd side, then projection.
pub fn upsample_kernel(k: &Kernel, new_size: usize) -> Result<Kernel> {
    if new_size.is_multiple_of(2) || new_size < k.size {
        return Err(DeblurError::config(
            "kernel_size",
            format!("cannot upsample a {0}x{0} kernel to {new_size}", k.size),
        ));
    }
    let img = resample(&k.to_image(), new_size, new_size);
    project_kernel(&Kernel {
        size: new_size,
        data: img.into_data(),
    })
}
