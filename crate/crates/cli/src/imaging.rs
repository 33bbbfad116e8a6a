//! Image decoding, resizing and PNG output.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use image::imageops::FilterType;
use image::{GrayImage, Rgb, RgbImage};
use odm_core::nd::Array;
use odm_core::synth::rgb_to_array;

const IMAGE_EXTENSIONS: &[&str] = &["png", "ppm", "pgm", "pnm"];

/// Finds `<dir>/<image_id>.<ext>` for a supported extension.
pub fn find_image(dir: &Path, image_id: &str) -> Result<PathBuf> {
    IMAGE_EXTENSIONS
        .iter()
        .map(|ext| dir.join(format!("{image_id}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| anyhow!("no image for `{image_id}` in {} (tried {IMAGE_EXTENSIONS:?})", dir.display()))
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)
        .with_context(|| format!("decoding {}", path.display()))?
        .to_rgb8())
}

pub fn dimensions(path: &Path) -> Result<(u32, u32)> {
    image::image_dimensions(path).with_context(|| format!("reading size of {}", path.display()))
}

/// Resizes to `size` x `size` and converts to a `[3, S, S]` array in `[0, 1]`.
pub fn to_model_input(img: &RgbImage, size: usize) -> Result<Array<f32>> {
    let resized = image::imageops::resize(img, size as u32, size as u32, FilterType::Triangle);
    Ok(rgb_to_array(resized.as_raw(), size, size)?)
}

pub fn save_gray(path: &Path, width: usize, height: usize, pixels: Vec<u8>) -> Result<()> {
    let img = GrayImage::from_raw(width as u32, height as u32, pixels).ok_or_else(|| anyhow!("buffer size mismatch"))?;
    img.save(path).with_context(|| format!("writing {}", path.display()))
}

/// Probability map to an 8-bit grayscale PNG.
pub fn save_probability(path: &Path, size: usize, logits: &[f32]) -> Result<()> {
    let px = logits
        .iter()
        .map(|&z| (255.0 / (1.0 + (-z).exp())).round() as u8)
        .collect();
    save_gray(path, size, size, px)
}

/// Blends a coarse heatmap, stretched to the image with nearest sampling
/// and scaled by its maximum, in red over the image.
pub fn save_heatmap_overlay(path: &Path, base: &RgbImage, heat: &[f32], grid: (usize, usize)) -> Result<()> {
    let (gh, gw) = grid;
    let peak = heat.iter().copied().fold(0.0f32, f32::max).max(f32::MIN_POSITIVE);
    let (w, h) = base.dimensions();
    let mut out = RgbImage::new(w, h);
    for (x, y, px) in out.enumerate_pixels_mut() {
        let gx = (x as usize * gw / w as usize).min(gw - 1);
        let gy = (y as usize * gh / h as usize).min(gh - 1);
        let a = heat[gy * gw + gx] / peak;
        let src = base.get_pixel(x, y);
        let mix = |c: u8, target: f32| ((1.0 - 0.6 * a) * c as f32 * 0.6 + 0.6 * a * target).round() as u8;
        *px = Rgb([mix(src[0], 255.0), mix(src[1], 0.0), mix(src[2], 0.0)]);
    }
    out.save(path).with_context(|| format!("writing {}", path.display()))
}
