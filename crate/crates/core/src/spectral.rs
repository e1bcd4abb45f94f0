//! Two-dimensional DFTs, PSF/OTF conversion and spectral convolution.
//!
//! Everything here assumes the circular boundary model: a kernel applied
//! through its OTF wraps around the image edges.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{DeblurError, Result};
use crate::image::Image;
use crate::kernel::Kernel;

/// Largest imaginary residue tolerated when a spectrum is declared Hermitian.
pub const HERMITIAN_TOLERANCE: f64 = 1e-6;

/// Full complex 2D spectrum, same row-major layout as the image it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(DeblurError::Dimension(format!(
                "{} bins for a {height}x{width} spectrum",
                data.len()
            )));
        }
        Ok(Spectrum { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Spectrum {
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Complex64 {
        self.data[u * self.width + v]
    }

    /// Index of the bin at `(-u mod H, -v mod W)`.
    #[inline]
    pub fn mirror_index(&self, idx: usize) -> usize {
        mirror_index(idx, self.height, self.width)
    }

    /// Largest deviation from `X(u,v) = conj(X(-u,-v))`, relative to the
    /// largest bin magnitude.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.data.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        if scale == 0.0 {
            return 0.0;
        }
        let worst = (0..self.data.len())
            .map(|i| (self.data[i] - self.data[self.mirror_index(i)].conj()).norm())
            .fold(0.0f64, f64::max);
        worst / scale
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Spectrum) -> Result<Spectrum> {
        crate::error::ensure_same_dims("spectrum product", self.dims(), other.dims())?;
        Ok(Spectrum {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        })
    }
}

/// Flat index of the bin mirrored through the origin, `(-u mod h, -v mod w)`.
#[inline]
pub fn mirror_index(idx: usize, h: usize, w: usize) -> usize {
    let (u, v) = (idx / w, idx % w);
    let mu = if u == 0 { 0 } else { h - u };
    let mv = if v == 0 { 0 } else { w - v };
    mu * w + mv
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plans(len: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(len), p.plan_fft_inverse(len))
    })
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const BLOCK: usize = 32;
    for rb in (0..rows).step_by(BLOCK) {
        for cb in (0..cols).step_by(BLOCK) {
            for r in rb..(rb + BLOCK).min(rows) {
                for c in cb..(cb + BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Unnormalized in-place 2D transform of a row-major `h`×`w` buffer.
pub(crate) fn fft2_in_place(data: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    let pick = |len| {
        let (f, i) = plans(len);
        if inverse {
            i
        } else {
            f
        }
    };
    let row_fft = pick(w);
    let col_fft = pick(h);
    let scratch_len = row_fft.get_inplace_scratch_len().max(col_fft.get_inplace_scratch_len());
    let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];
    row_fft.process_with_scratch(data, &mut scratch);
    if h > 1 {
        let mut t = vec![Complex64::new(0.0, 0.0); h * w];
        transpose(data, &mut t, h, w);
        col_fft.process_with_scratch(&mut t, &mut scratch);
        transpose(&t, data, w, h);
    }
}

/// Smallest length `>= n` whose prime factors are all at most 7, where
/// FFTs are fastest.
pub fn fast_len(n: usize) -> usize {
    (n.max(1)..)
        .find(|&m| {
            let mut r = m;
            for p in [2, 3, 5, 7] {
                while r % p == 0 {
                    r /= p;
                }
            }
            r == 1
        })
        .expect("7-smooth numbers are unbounded")
}

/// Unnormalized forward DFT; the DC bin equals the pixel sum.
pub fn fft2(img: &Image) -> Spectrum {
    let (h, w) = img.dims();
    let mut data: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_in_place(&mut data, h, w, false);
    Spectrum {
        height: h,
        width: w,
        data,
    }
}

/// Inverse DFT scaled by `1/(H·W)`, returning the complex result.
pub fn ifft2_complex(spec: &Spectrum) -> Vec<Complex64> {
    let (h, w) = spec.dims();
    let mut data = spec.data.clone();
    fft2_in_place(&mut data, h, w, true);
    let norm = 1.0 / (h * w) as f64;
    for c in &mut data {
        *c *= norm;
    }
    data
}

/// Inverse DFT of a spectrum declared Hermitian; fails if the imaginary
/// residue exceeds [`HERMITIAN_TOLERANCE`] (scaled by the output magnitude
/// when that exceeds one).
pub fn ifft2(spec: &Spectrum) -> Result<Image> {
    let (h, w) = spec.dims();
    let out = ifft2_complex(spec);
    let mut max_re = 0.0f64;
    let mut max_im = 0.0f64;
    for c in &out {
        max_re = max_re.max(c.re.abs());
        max_im = max_im.max(c.im.abs());
    }
    if max_im.is_nan() || max_im > HERMITIAN_TOLERANCE * max_re.max(1.0) {
        return Err(DeblurError::Numeric(format!(
            "inverse transform left imaginary residue {max_im:.3e}"
        )));
    }
    let data: Vec<f64> = out.into_iter().map(|c| c.re).collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(DeblurError::Numeric(
            "inverse transform produced non-finite values".into(),
        ));
    }
    Ok(Image::from_vec_unchecked(h, w, data))
}

/// Inverse DFT keeping only the real part, with no residue check.
pub fn ifft2_real(spec: &Spectrum) -> Image {
    let (h, w) = spec.dims();
    let data = ifft2_complex(spec).into_iter().map(|c| c.re).collect();
    Image::from_vec_unchecked(h, w, data)
}

/// Embeds the kernel in an `h`×`w` canvas with its center moved to (0, 0)
/// and transforms it, so that spectral multiplication equals circular
/// convolution.
pub fn psf_to_otf(k: &Kernel, h: usize, w: usize) -> Result<Spectrum> {
    let size = k.size();
    if size > h || size > w {
        return Err(DeblurError::Dimension(format!(
            "{size}x{size} kernel does not fit a {h}x{w} image"
        )));
    }
    let c = size / 2;
    let mut data = vec![Complex64::new(0.0, 0.0); h * w];
    for i in 0..size {
        let y = (i + h - c) % h;
        for j in 0..size {
            let x = (j + w - c) % w;
            data[y * w + x].re += k.get(i, j);
        }
    }
    fft2_in_place(&mut data, h, w, false);
    Ok(Spectrum {
        height: h,
        width: w,
        data,
    })
}

/// Inverse of [`psf_to_otf`]: transforms back and crops the centered
/// `size`×`size` window. The window may hold negative values.
pub fn otf_to_psf(otf: &Spectrum, size: usize) -> Result<Vec<f64>> {
    let (h, w) = otf.dims();
    if size > h || size > w {
        return Err(DeblurError::Dimension(format!(
            "{size}x{size} window does not fit a {h}x{w} spectrum"
        )));
    }
    let full = ifft2(otf)?;
    let c = size / 2;
    let mut out = Vec::with_capacity(size * size);
    for i in 0..size {
        let y = (i + h - c) % h;
        for j in 0..size {
            let x = (j + w - c) % w;
            out.push(full.get(y, x));
        }
    }
    Ok(out)
}

/// Circular convolution through the convolution theorem.
pub fn convolve(img: &Image, k: &Kernel) -> Result<Image> {
    let otf = psf_to_otf(k, img.height(), img.width())?;
    ifft2(&fft2(img).mul(&otf)?)
}

/// Transfer functions of the forward-difference operators along x and y.
pub fn gradient_otfs(h: usize, w: usize) -> (Spectrum, Spectrum) {
    let tau = std::f64::consts::TAU;
    let mut dx = Vec::with_capacity(h * w);
    let mut dy = Vec::with_capacity(h * w);
    for u in 0..h {
        let ey = Complex64::from_polar(1.0, tau * u as f64 / h as f64) - 1.0;
        for v in 0..w {
            let ex = Complex64::from_polar(1.0, tau * v as f64 / w as f64) - 1.0;
            dx.push(ex);
            dy.push(ey);
        }
    }
    (
        Spectrum {
            height: h,
            width: w,
            data: dx,
        },
        Spectrum {
            height: h,
            width: w,
            data: dy,
        },
    )
}
