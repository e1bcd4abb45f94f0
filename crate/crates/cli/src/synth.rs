//! Synthetic blur: seeded camera-shake kernels, convolution and noise.

use fftrelu::image::pad_replicate;
use fftrelu::kernel::project_kernel;
use fftrelu::{convolve, ColorImage, DeblurError, Image, Kernel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Samples along the simulated camera trajectory.
const TRAJECTORY_SAMPLES: usize = 2000;

/// A camera-shake kernel: a random walk with inertia, rasterized with
/// bilinear splatting into a `size`×`size` grid and projected onto the
/// simplex. The same `(size, seed)` always gives the same kernel.
pub fn random_walk_kernel(size: usize, seed: u64) -> Result<Kernel, DeblurError> {
    if size < 3 || size.is_multiple_of(2) {
        return Err(DeblurError::Config {
            key: "kernel_size".into(),
            reason: format!("random kernels need an odd size >= 3, got {size}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 1.0).expect("unit normal");
    // Velocity follows a damped random walk so paths curve but stay coherent.
    let angle: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let (mut vy, mut vx) = (angle.sin(), angle.cos());
    let (mut py, mut px) = (0.0f64, 0.0f64);
    let mut path = Vec::with_capacity(TRAJECTORY_SAMPLES);
    let inertia = 0.7 + 0.25 * rng.random::<f64>();
    for _ in 0..TRAJECTORY_SAMPLES {
        path.push((py, px));
        vy = inertia * vy + (1.0 - inertia) * jitter.sample(&mut rng);
        vx = inertia * vx + (1.0 - inertia) * jitter.sample(&mut rng);
        let norm = (vy * vy + vx * vx).sqrt().max(1e-12);
        py += vy / norm;
        px += vx / norm;
    }
    // Center the path's mean on the grid center, so the kernel centroid sits
    // exactly there (bilinear splatting preserves the centroid), and scale
    // it to leave a one-pixel margin. The spread varies per seed between
    // half and all of the available extent.
    let n = path.len() as f64;
    let mean_y = path.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_x = path.iter().map(|p| p.1).sum::<f64>() / n;
    let reach = path
        .iter()
        .map(|p| (p.0 - mean_y).abs().max((p.1 - mean_x).abs()))
        .fold(1e-9, f64::max);
    let target = (size as f64 - 3.0) / 2.0 * (0.5 + 0.5 * rng.random::<f64>());
    let scale = target / reach;
    let center = (size as f64 - 1.0) / 2.0;
    let (mid_y, mid_x) = (mean_y, mean_x);
    let mut raster = vec![0.0; size * size];
    for &(y, x) in &path {
        let fy = center + (y - mid_y) * scale;
        let fx = center + (x - mid_x) * scale;
        let (y0, x0) = (fy.floor(), fx.floor());
        let (ty, tx) = (fy - y0, fx - x0);
        for (dy, wy) in [(0, 1.0 - ty), (1, ty)] {
            for (dx, wx) in [(0, 1.0 - tx), (1, tx)] {
                let (yy, xx) = (y0 as usize + dy, x0 as usize + dx);
                if yy < size && xx < size {
                    raster[yy * size + xx] += wy * wx;
                }
            }
        }
    }
    project_kernel(&Kernel::new(size, raster)?)
}

/// Blurs every channel: replicate-pad by the kernel radius, convolve
/// circularly, crop back to the input size.
pub fn blur_image(img: &ColorImage, k: &Kernel) -> Result<ColorImage, DeblurError> {
    let r = k.radius();
    let channels = img
        .channels()
        .iter()
        .map(|ch| {
            let (h, w) = ch.dims();
            convolve(&pad_replicate(ch, r, r, r, r), k)?.crop(r, r, h, w)
        })
        .collect::<Result<Vec<_>, _>>()?;
    ColorImage::from_channels(channels)
}

/// Adds zero-mean Gaussian noise of standard deviation `sigma` (seeded) and
/// clamps to [0, 1].
pub fn add_noise(img: &ColorImage, sigma: f64, seed: u64) -> Result<ColorImage, DeblurError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(DeblurError::Config {
            key: "noise".into(),
            reason: format!("standard deviation must be finite and >= 0, got {sigma}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("validated sigma");
    let channels = img
        .channels()
        .iter()
        .map(|ch| {
            Image::from_fn(ch.height(), ch.width(), |y, x| {
                (ch.get(y, x) + normal.sample(&mut rng)).clamp(0.0, 1.0)
            })
        })
        .collect();
    ColorImage::from_channels(channels)
}
