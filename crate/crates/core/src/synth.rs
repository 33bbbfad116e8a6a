//! Small synthetic scenes: a few words in a flat colour over a gradient, with
//! mild rotation and pixel noise.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annot::{SceneAnnotation, Shape, TextInstance};
use crate::error::{OdmError, Result};
use crate::geom::{Point2, Quad};
use crate::glyph::{render_label, GlyphSet};
use crate::nd::{Array, Real};

const WORDS: &[&str] = &[
    "Ridge", "lake", "trail", "OPEN", "cafe", "Exit", "north", "PARK", "river", "Stop", "mill", "BANK", "gate",
    "Hotel", "farm", "SALE", "wood", "Bay", "door", "LOFT", "pier", "Mint", "road", "ZONE", "fox", "Quay", "jam",
    "WAVE", "kiln", "Yard",
];

/// An RGB scene with its ground-truth annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub annotation: SceneAnnotation,
    pub width: usize,
    pub height: usize,
    /// Row-major interleaved RGB.
    pub rgb: Vec<u8>,
}

impl SyntheticScene {
    pub fn to_array<T: Real>(&self) -> Array<T> {
        rgb_to_array(&self.rgb, self.width, self.height).expect("scene buffer matches its size")
    }
}

/// Interleaved 8-bit RGB to a `[3, H, W]` array in `[0, 1]`.
pub fn rgb_to_array<T: Real>(rgb: &[u8], width: usize, height: usize) -> Result<Array<T>> {
    let hw = width * height;
    if rgb.len() != 3 * hw {
        return Err(OdmError::shape("rgb buffer", &[rgb.len()], &[3, height, width]));
    }
    let mut data = vec![T::ZERO; 3 * hw];
    for (i, px) in rgb.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * hw + i] = T::from_f64(px[c] as f64 / 255.0);
        }
    }
    Array::new(&[3, height, width], data)
}

fn rotated_box(cx: f64, cy: f64, w: f64, h: f64, angle: f64) -> Result<Quad> {
    let (s, c) = angle.sin_cos();
    let corner = |dx: f64, dy: f64| Point2::new(cx + dx * c - dy * s, cy + dx * s + dy * c);
    Quad::new([
        corner(-w / 2.0, -h / 2.0),
        corner(w / 2.0, -h / 2.0),
        corner(w / 2.0, h / 2.0),
        corner(-w / 2.0, h / 2.0),
    ])
}

/// Scene `index` of the stream identified by `seed`: 2 or 3 distinct words
/// in separate horizontal bands of a `size` x `size` canvas.
pub fn synth_scene(seed: u64, index: u64, glyphs: &GlyphSet, size: usize) -> Result<SyntheticScene> {
    if size < 32 {
        return Err(OdmError::Domain(format!("synthetic scenes need at least 32 px, got {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let s = size as f64;
    let n_words = rng.gen_range(2..=3);
    let words: Vec<&str> = WORDS.choose_multiple(&mut rng, n_words).copied().collect();

    let mut ann = SceneAnnotation::new(format!("synth_{seed}_{index}"), size as u32, size as u32);
    let band = s / n_words as f64;
    for (i, word) in words.iter().enumerate() {
        let n = word.chars().count() as f64;
        let max_h = (band * 0.8).min((s - 8.0) / (0.62 * n));
        let h = rng.gen_range(0.7 * max_h..=max_h);
        let w = 0.62 * h * n;
        let cx = rng.gen_range(w / 2.0 + 4.0..=s - w / 2.0 - 4.0);
        let cy = band * (i as f64 + 0.5) + rng.gen_range(-0.05..=0.05) * band;
        let angle = rng.gen_range(-0.08..=0.08);
        let quad = rotated_box(cx, cy, w, h, angle)?;
        ann.instances.push(TextInstance::new(Shape::Quad(quad), *word));
    }
    ann.clamp_to_canvas()?;

    let ink = render_label(&ann, glyphs, (size, size), None)?.canvas;
    // Ink and both gradient endpoints sit on opposite sides of mid-grey in
    // every channel, so text stays legible across the whole canvas.
    let light_bg = rng.gen_bool(0.5);
    let (bg_range, fg_range) = if light_bg { (0.55..1.0, 0.0..0.25) } else { (0.0..0.45, 0.75..1.0) };
    let bg0: [f64; 3] = std::array::from_fn(|_| rng.gen_range(bg_range.clone()));
    let bg1: [f64; 3] = std::array::from_fn(|_| rng.gen_range(bg_range.clone()));
    let fg: [f64; 3] = std::array::from_fn(|_| rng.gen_range(fg_range.clone()));
    let dir = rng.gen_range(0.0..std::f64::consts::TAU);
    let (dy, dx) = dir.sin_cos();

    let mut rgb = Vec::with_capacity(3 * size * size);
    for y in 0..size {
        for x in 0..size {
            let t = (((x as f64 / s - 0.5) * dx + (y as f64 / s - 0.5) * dy) + 0.71) / 1.42;
            for c in 0..3 {
                let base = if ink.get(x, y) != 0 {
                    fg[c]
                } else {
                    bg0[c] + (bg1[c] - bg0[c]) * t
                };
                let v = (base + rng.gen_range(-0.04..=0.04)).clamp(0.0, 1.0);
                rgb.push((v * 255.0).round() as u8);
            }
        }
    }
    Ok(SyntheticScene {
        annotation: ann,
        width: size,
        height: size,
        rgb,
    })
}

pub fn synth_dataset(n: usize, seed: u64, glyphs: &GlyphSet, size: usize) -> Result<Vec<SyntheticScene>> {
    (0..n as u64).map(|i| synth_scene(seed, i, glyphs, size)).collect()
}
