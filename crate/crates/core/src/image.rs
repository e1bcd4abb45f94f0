//! Raster containers and the spatial-domain helpers shared by every stage:
//! luminance conversion, circular gradients, bilinear resampling, replicate
//! padding and the coarse-to-fine scale schedule.

use crate::error::{DeblurError, Result};

/// Single-channel real raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image, checking the length and that every value is finite.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(DeblurError::Dimension(format!(
                "image must be non-empty, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(DeblurError::Dimension(format!(
                "{} values for a {height}x{width} image",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DeblurError::Numeric("image contains non-finite values".into()));
        }
        Ok(Image { height, width, data })
    }

    pub(crate) fn from_vec_unchecked(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Image { height, width, data }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "image must be non-empty");
        Image {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "image must be non-empty");
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Image { height, width, data }
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Applies `f` to every value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image::from_vec_unchecked(self.height, self.width, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise combination of two images of equal size.
    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        crate::error::ensure_same_dims("zip_map", self.dims(), other.dims())?;
        Ok(Image::from_vec_unchecked(
            self.height,
            self.width,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn clamp01(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Extracts the `h`×`w` window whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Image> {
        if h == 0 || w == 0 || top + h > self.height || left + w > self.width {
            return Err(DeblurError::Dimension(format!(
                "crop {h}x{w} at ({top},{left}) outside {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(h * w);
        for y in top..top + h {
            data.extend_from_slice(&self.data[y * self.width + left..y * self.width + left + w]);
        }
        Ok(Image::from_vec_unchecked(h, w, data))
    }

    /// Circular translation: `out(y, x) = self(y - dy, x - dx)`.
    pub fn circular_shift(&self, dy: isize, dx: isize) -> Image {
        let (h, w) = self.dims();
        let sy = dy.rem_euclid(h as isize) as usize;
        let sx = dx.rem_euclid(w as isize) as usize;
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            let ty = (y + sy) % h;
            for x in 0..w {
                out[ty * w + (x + sx) % w] = self.data[y * w + x];
            }
        }
        Image::from_vec_unchecked(h, w, out)
    }
}

/// A multi-channel raster. RGB images carry three planes; grayscale
/// inputs are carried as a single plane so they are not processed three
/// times.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    channels: Vec<Image>,
}

impl ColorImage {
    pub fn rgb(r: Image, g: Image, b: Image) -> Result<Self> {
        if r.dims() != g.dims() || r.dims() != b.dims() {
            return Err(DeblurError::Dimension("RGB planes differ in size".into()));
        }
        Ok(ColorImage {
            channels: vec![r, g, b],
        })
    }

    pub fn gray(img: Image) -> Self {
        ColorImage { channels: vec![img] }
    }

    /// Builds from a list of one or three equally sized planes.
    pub fn from_channels(channels: Vec<Image>) -> Result<Self> {
        match channels.len() {
            1 => Ok(ColorImage { channels }),
            3 => {
                let mut it = channels.into_iter();
                let (r, g, b) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
                ColorImage::rgb(r, g, b)
            }
            n => Err(DeblurError::Dimension(format!("expected 1 or 3 channels, got {n}"))),
        }
    }

    pub fn channels(&self) -> &[Image] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Image> {
        self.channels
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn is_rgb(&self) -> bool {
        self.channels.len() == 3
    }

    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }
}

/// BT.601 luminance, clamped to [0, 1]. Single-plane images pass through.
pub fn to_grayscale(img: &ColorImage) -> Image {
    match img.channels() {
        [r, g, b] => {
            let data = r
                .data()
                .iter()
                .zip(g.data())
                .zip(b.data())
                .map(|((&r, &g), &b)| (0.299 * r + 0.587 * g + 0.114 * b).clamp(0.0, 1.0))
                .collect();
            Image::from_vec_unchecked(r.height(), r.width(), data)
        }
        [only] => only.clone(),
        _ => unreachable!("ColorImage holds one or three channels"),
    }
}

/// Forward differences with circular wrap:
/// `gx(y, x) = I(y, x+1) - I(y, x)`, `gy(y, x) = I(y+1, x) - I(y, x)`.
pub fn gradients(img: &Image) -> (Image, Image) {
    let (h, w) = img.dims();
    let d = img.data();
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for y in 0..h {
        let yn = if y + 1 == h { 0 } else { y + 1 };
        for x in 0..w {
            let xn = if x + 1 == w { 0 } else { x + 1 };
            let v = d[y * w + x];
            gx[y * w + x] = d[y * w + xn] - v;
            gy[y * w + x] = d[yn * w + x] - v;
        }
    }
    (Image::from_vec_unchecked(h, w, gx), Image::from_vec_unchecked(h, w, gy))
}

/// Adjoint of [`gradients`]: `Dx^T gx + Dy^T gy`.
pub fn divergence_adjoint(gx: &Image, gy: &Image) -> Image {
    let (h, w) = gx.dims();
    let (ax, ay) = (gx.data(), gy.data());
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let yp = if y == 0 { h - 1 } else { y - 1 };
        for x in 0..w {
            let xp = if x == 0 { w - 1 } else { x - 1 };
            out[y * w + x] = ax[y * w + xp] - ax[y * w + x] + ay[yp * w + x] - ay[y * w + x];
        }
    }
    Image::from_vec_unchecked(h, w, out)
}

/// Center-aligned sample positions and weights for one axis.
fn bilinear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Bilinear resampling with pixel centers aligned and edge-clamped sampling.
pub fn resample(img: &Image, target_h: usize, target_w: usize) -> Image {
    assert!(target_h > 0 && target_w > 0, "resample target must be non-empty");
    if img.dims() == (target_h, target_w) {
        return img.clone();
    }
    let (_, w) = img.dims();
    let ty = bilinear_taps(img.height(), target_h);
    let tx = bilinear_taps(w, target_w);
    let d = img.data();
    let mut out = Vec::with_capacity(target_h * target_w);
    for &(y0, y1, fy) in &ty {
        for &(x0, x1, fx) in &tx {
            let top = d[y0 * w + x0] * (1.0 - fx) + d[y0 * w + x1] * fx;
            let bot = d[y1 * w + x0] * (1.0 - fx) + d[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    Image::from_vec_unchecked(target_h, target_w, out)
}

/// Edge-replicated padding.
pub fn pad_replicate(img: &Image, top: usize, bottom: usize, left: usize, right: usize) -> Image {
    let (h, w) = img.dims();
    let (nh, nw) = (h + top + bottom, w + left + right);
    let d = img.data();
    let mut out = Vec::with_capacity(nh * nw);
    for y in 0..nh {
        let sy = y.saturating_sub(top).min(h - 1);
        for x in 0..nw {
            let sx = x.saturating_sub(left).min(w - 1);
            out.push(d[sy * w + sx]);
        }
    }
    Image::from_vec_unchecked(nh, nw, out)
}

/// Pads by `pad` on every side so that the result, read circularly, is
/// continuous: each row (then each column) crosses the `2·pad` gap between
/// its last and first sample along a raised-cosine blend. The original
/// occupies rows and columns `pad..pad + h` and `pad..pad + w`.
pub fn pad_periodic(img: &Image, pad: usize) -> Image {
    let (h, w) = img.dims();
    pad_periodic_to(img, pad, h + 2 * pad, w + 2 * pad)
}

/// [`pad_periodic`] onto a `height`×`width` canvas with the original at
/// offset `(pad, pad)`; the blend spans the remaining `height − h` rows and
/// `width − w` columns. Used to reach sizes with fast transforms.
pub fn pad_periodic_to(img: &Image, pad: usize, height: usize, width: usize) -> Image {
    let (h, w) = img.dims();
    assert!(
        height >= h + pad && width >= w + pad,
        "canvas must hold the image at offset {pad}"
    );
    let blend = |gap: usize| -> Vec<f64> {
        (1..=gap)
            .map(|j| 0.5 - 0.5 * (std::f64::consts::PI * j as f64 / (gap + 1) as f64).cos())
            .collect()
    };
    let (blend_x, blend_y) = (blend(width - w), blend(height - h));
    let mut out = vec![0.0; height * width];
    for y in 0..h {
        let row = &mut out[(y + pad) * width..(y + pad + 1) * width];
        for x in 0..w {
            row[pad + x] = img.get(y, x);
        }
        let (last, first) = (img.get(y, w - 1), img.get(y, 0));
        for (j, s) in blend_x.iter().enumerate() {
            row[(pad + w + j) % width] = (1.0 - s) * last + s * first;
        }
    }
    for x in 0..width {
        let (last, first) = (out[(pad + h - 1) * width + x], out[pad * width + x]);
        for (j, s) in blend_y.iter().enumerate() {
            out[((pad + h + j) % height) * width + x] = (1.0 - s) * last + s * first;
        }
    }
    Image::from_vec_unchecked(height, width, out)
}

/// One pyramid level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleLevel {
    pub image_scale: f64,
    pub kernel_size: usize,
}

/// Pyramid levels, coarsest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSchedule {
    pub levels: Vec<ScaleLevel>,
}

/// Builds the coarse-to-fine schedule for a kernel of side `kernel_size`.
///
/// Levels whose rounded kernel size coincides with the next finer level
/// are merged so image scales stay strictly increasing.
pub fn build_scale_schedule(kernel_size: usize, min_kernel: usize, ratio: f64) -> Result<ScaleSchedule> {
    if kernel_size < 3 || kernel_size.is_multiple_of(2) {
        return Err(DeblurError::config("kernel_size", "must be odd and >= 3"));
    }
    if min_kernel < 3 || min_kernel.is_multiple_of(2) {
        return Err(DeblurError::config("min_kernel", "must be odd and >= 3"));
    }
    if min_kernel > kernel_size {
        return Err(DeblurError::config("min_kernel", "must not exceed kernel_size"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DeblurError::config("scale_ratio", "must lie in (0, 1)"));
    }
    let steps = ((min_kernel as f64 / kernel_size as f64).ln() / ratio.ln()).ceil();
    let n = if steps.is_finite() && steps > 0.0 {
        steps as usize + 1
    } else {
        1
    };
    let mut sizes: Vec<usize> = (0..n)
        .map(|i| {
            let exact = kernel_size as f64 * ratio.powi((n - 1 - i) as i32);
            let mut s = (exact - 1e-9).ceil().max(3.0) as usize;
            if s.is_multiple_of(2) {
                s += 1;
            }
            s.min(kernel_size)
        })
        .collect();
    sizes.dedup();
    let levels = sizes
        .into_iter()
        .map(|s| ScaleLevel {
            image_scale: s as f64 / kernel_size as f64,
            kernel_size: s,
        })
        .collect();
    Ok(ScaleSchedule { levels })
}
