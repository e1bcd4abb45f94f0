//! Image and kernel files.
//!
//! Images are PNG (8- or 16-bit, gray or RGB; alpha is dropped) or binary
//! PGM/PPM. Kernels are stored as a text matrix with a `ksize <h> <w>` header,
//! or as an image that is renormalized to unit sum on load.

use std::fmt::Write as _;
use std::path::Path;

use fftrelu::kernel::project_kernel;
use fftrelu::{ColorImage, Image, Kernel};
use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::CliError;

/// Sample precision of an image file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Loads an image as intensities in [0, 1].
pub fn read_image(path: &Path) -> Result<(ColorImage, BitDepth), CliError> {
    let img = image::open(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let depth = match img.color().bytes_per_pixel() / img.color().channel_count() {
        1 => BitDepth::Eight,
        _ => BitDepth::Sixteen,
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let build = |samples: Vec<f64>| Image::new(h, w, samples).map_err(|e| CliError::Input(e.to_string()));
    let color = if img.color().has_color() {
        let rgb = img.to_rgb16();
        let plane = |c: usize| build(rgb.pixels().map(|p| p.0[c] as f64 / 65535.0).collect());
        ColorImage::rgb(plane(0)?, plane(1)?, plane(2)?).map_err(|e| CliError::Input(e.to_string()))?
    } else {
        let gray = img.to_luma16();
        ColorImage::gray(build(gray.pixels().map(|p| p.0[0] as f64 / 65535.0).collect())?)
    };
    Ok((color, depth))
}

fn quantize<T>(v: f64, max: f64) -> T
where
    T: TryFrom<u32>,
    <T as TryFrom<u32>>::Error: std::fmt::Debug,
{
    T::try_from((v.clamp(0.0, 1.0) * max).round() as u32).expect("value in range")
}

/// Writes an image, clamping to [0, 1]; the format follows the extension.
pub fn write_image(path: &Path, img: &ColorImage, depth: BitDepth) -> Result<(), CliError> {
    let (h, w) = img.dims();
    let ch = img.channels();
    let dynamic = match (img.is_rgb(), depth) {
        (false, BitDepth::Eight) => DynamicImage::ImageLuma8(ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            Luma([quantize(ch[0].get(y as usize, x as usize), 255.0)])
        })),
        (false, BitDepth::Sixteen) => DynamicImage::ImageLuma16(ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            Luma([quantize(ch[0].get(y as usize, x as usize), 65535.0)])
        })),
        (true, BitDepth::Eight) => DynamicImage::ImageRgb8(ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            Rgb(std::array::from_fn(|c| {
                quantize(ch[c].get(y as usize, x as usize), 255.0)
            }))
        })),
        (true, BitDepth::Sixteen) => DynamicImage::ImageRgb16(ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            Rgb(std::array::from_fn(|c| {
                quantize(ch[c].get(y as usize, x as usize), 65535.0)
            }))
        })),
    };
    dynamic
        .save(path)
        .map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))
}

/// Text form of a kernel; 17 significant digits make it round-trip exactly.
pub fn kernel_to_text(k: &Kernel) -> String {
    let n = k.size();
    let mut out = format!("ksize {n} {n}\n");
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| format!("{:.16e}", k.get(i, j))).collect();
        writeln!(out, "{}", row.join(" ")).expect("writing to a String");
    }
    out
}

/// Parses the text form written by [`kernel_to_text`].
pub fn kernel_from_text(text: &str) -> Result<Kernel, CliError> {
    let bad = |msg: String| CliError::Input(format!("kernel text: {msg}"));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("empty".into()))?
        .split_whitespace()
        .collect();
    let (h, w) = match header.as_slice() {
        ["ksize", h, w] => (
            h.parse::<usize>().map_err(|_| bad(format!("bad height `{h}`")))?,
            w.parse::<usize>().map_err(|_| bad(format!("bad width `{w}`")))?,
        ),
        _ => return Err(bad("missing `ksize <h> <w>` header".into())),
    };
    if h != w {
        return Err(bad(format!("kernel must be square, got {h}x{w}")));
    }
    let mut data = Vec::with_capacity(h * w);
    for (i, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(format!("bad value `{t}` on row {i}"))))
            .collect::<Result<_, _>>()?;
        if row.len() != w {
            return Err(bad(format!("row {i} has {} values, expected {w}", row.len())));
        }
        data.extend(row);
    }
    if data.len() != h * w {
        return Err(bad(format!("expected {h} rows")));
    }
    Kernel::new(h, data).map_err(|e| bad(e.to_string()))
}

/// Loads a kernel from a `.txt` matrix or an image file. Image kernels are
/// projected onto the simplex, so any positive scaling is accepted.
pub fn read_kernel(path: &Path) -> Result<Kernel, CliError> {
    let is_text = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("txt"));
    if is_text {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        return kernel_from_text(&text);
    }
    let (img, _) = read_image(path)?;
    let gray = fftrelu::to_grayscale(&img);
    let k = Kernel::from_image(&gray).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    project_kernel(&k).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Writes the kernel as a text matrix.
pub fn write_kernel_text(path: &Path, k: &Kernel) -> Result<(), CliError> {
    std::fs::write(path, kernel_to_text(k))
        .map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))
}

/// Writes the kernel as an 8-bit image scaled so its peak is white.
pub fn write_kernel_png(path: &Path, k: &Kernel) -> Result<(), CliError> {
    let peak = k.max();
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    let img = k.to_image().map(|v| v * scale);
    write_image(path, &ColorImage::gray(img), BitDepth::Eight)
}
