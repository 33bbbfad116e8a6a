use crate::annot::{SceneAnnotation, Shape};
use crate::error::{OdmError, Result};
use crate::geom::{
    char_slots_bezier, char_slots_quad, BezierPair, CharSlot, CubicBezier, Point2, Polygon, Quad,
};

use super::{Glyph, GlyphSet};

/// Sub-pixel samples per axis when estimating glyph coverage.
pub const SAMPLES_PER_AXIS: usize = 4;
/// A pixel is foreground when at least this fraction of its samples is ink.
pub const COVERAGE_THRESHOLD: f64 = 0.5;

/// Binary destylized target, row-major, values in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelCanvas {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl LabelCanvas {
    pub fn new(width: usize, height: usize) -> Self {
        LabelCanvas {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    /// Builds a canvas from arbitrary bytes, mapping non-zero to 1.
    pub fn from_pixels(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(OdmError::Shape(format!(
                "canvas {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(LabelCanvas {
            width,
            height,
            pixels: pixels.iter().map(|&p| u8::from(p != 0)).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize) {
        self.pixels[y * self.width + x] = 1;
    }

    pub fn foreground(&self) -> usize {
        self.pixels.iter().map(|&p| p as usize).sum()
    }

    /// Pixelwise OR.
    pub fn union(&self, other: &LabelCanvas) -> Result<LabelCanvas> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(OdmError::shape(
                "canvas union",
                &[self.height, self.width],
                &[other.height, other.width],
            ));
        }
        Ok(LabelCanvas {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().zip(&other.pixels).map(|(a, b)| a | b).collect(),
        })
    }

    /// Pixels scaled to 0/255 for 8-bit image output.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&p| p * 255).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedInstance {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub canvas: LabelCanvas,
    pub rendered: Vec<usize>,
    pub skipped: Vec<SkippedInstance>,
}

/// Least-squares cubic through `pts` with its endpoints pinned, using
/// chord-length parameters.
fn fit_cubic(pts: &[Point2]) -> CubicBezier {
    let (p0, p3) = (pts[0], pts[pts.len() - 1]);
    if pts.len() < 4 {
        return CubicBezier::line(p0, p3);
    }
    let mut cum = vec![0.0];
    for w in pts.windows(2) {
        cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    if total <= 0.0 {
        return CubicBezier::line(p0, p3);
    }
    let (mut a11, mut a12, mut a22) = (0.0, 0.0, 0.0);
    let (mut r1, mut r2) = (Point2::default(), Point2::default());
    for (p, c) in pts.iter().zip(&cum) {
        let t = c / total;
        let s = 1.0 - t;
        let (b0, b1, b2, b3) = (s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t);
        let resid = *p - p0 * b0 - p3 * b3;
        a11 += b1 * b1;
        a12 += b1 * b2;
        a22 += b2 * b2;
        r1 = r1 + resid * b1;
        r2 = r2 + resid * b2;
    }
    let det = a11 * a22 - a12 * a12;
    if det.abs() < 1e-12 {
        return CubicBezier::line(p0, p3);
    }
    let c1 = (r1 * a22 - r2 * a12) * (1.0 / det);
    let c2 = (r2 * a11 - r1 * a12) * (1.0 / det);
    CubicBezier { c: [p0, c1, c2, p3] }
}

/// Character slots for a polygon: even-length rings are read as a top
/// polyline followed by the bottom polyline in reverse, each fitted with a
/// cubic; anything else falls back to the bounding rectangle.
fn polygon_slots(poly: &Polygon, n: usize) -> Result<Vec<CharSlot>> {
    let pts = &poly.pts;
    if pts.len() == 4 {
        if let Ok(q) = Quad::normalized([pts[0], pts[1], pts[2], pts[3]]) {
            return char_slots_quad(&q, n);
        }
    }
    if pts.len() >= 4 && pts.len() % 2 == 0 {
        let half = pts.len() / 2;
        let top = fit_cubic(&pts[..half]);
        let bottom_pts: Vec<Point2> = pts[half..].iter().rev().copied().collect();
        let bottom = fit_cubic(&bottom_pts);
        if let Ok(pair) = BezierPair::new(top, bottom) {
            if let Ok(slots) = char_slots_bezier(&pair, n) {
                return Ok(slots);
            }
        }
    }
    let (x0, y0, x1, y1) = poly.bounds();
    char_slots_quad(&Quad::axis_aligned(x0, y0, x1, y1)?, n)
}

/// Character slots of instance `index`, in the coordinate frame of a
/// `size = (width, height)` canvas.
pub fn instance_slots(ann: &SceneAnnotation, index: usize, size: (usize, usize)) -> Result<Vec<CharSlot>> {
    let inst = ann
        .instances
        .get(index)
        .ok_or_else(|| OdmError::Domain(format!("instance index {index} out of range")))?;
    let n = inst.text.chars().count();
    if n == 0 {
        return Err(OdmError::Domain(format!("instance {index} has an empty transcription")));
    }
    let sx = size.0 as f64 / ann.width as f64;
    let sy = size.1 as f64 / ann.height as f64;
    let shape = inst.shape.map_points(|p| Point2::new(p.x * sx, p.y * sy))?;
    match &shape {
        Shape::Quad(q) => char_slots_quad(q, n),
        Shape::Bezier(b) => char_slots_bezier(b, n),
        Shape::Polygon(p) => polygon_slots(p, n),
    }
}

/// Fits `glyph` into the slot: the em box is centred on the slot, rotated by
/// the slot angle and stretched to the slot's mean width and area-preserving
/// height. Samples outside the slot quad never count as ink.
fn draw_glyph(canvas: &mut LabelCanvas, slot: &CharSlot, glyph: &Glyph) {
    let [tl, tr, br, bl] = slot.quad.p;
    let w = ((tr - tl).norm() + (br - bl).norm()) * 0.5;
    if w <= 0.0 {
        return;
    }
    let h = slot.quad.area() / w;
    if h <= 0.0 {
        return;
    }
    let (sin, cos) = slot.angle.sin_cos();
    let u_axis = Point2::new(cos, sin);
    let v_axis = Point2::new(-sin, cos);
    let centre = slot.quad.centroid();

    let (x0, y0, x1, y1) = slot.quad.bounds();
    let px0 = x0.floor().max(0.0) as usize;
    let py0 = y0.floor().max(0.0) as usize;
    let px1 = (x1.ceil().max(0.0) as usize).min(canvas.width);
    let py1 = (y1.ceil().max(0.0) as usize).min(canvas.height);

    let total = SAMPLES_PER_AXIS * SAMPLES_PER_AXIS;
    let needed = (COVERAGE_THRESHOLD * total as f64).ceil() as usize;
    let step = 1.0 / SAMPLES_PER_AXIS as f64;
    for py in py0..py1 {
        for px in px0..px1 {
            let mut hits = 0;
            for sy in 0..SAMPLES_PER_AXIS {
                for sx in 0..SAMPLES_PER_AXIS {
                    let p = Point2::new(
                        px as f64 + (sx as f64 + 0.5) * step,
                        py as f64 + (sy as f64 + 0.5) * step,
                    );
                    if !slot.quad.contains(p) {
                        continue;
                    }
                    let d = p - centre;
                    let u = d.dot(u_axis) / w + 0.5;
                    let v = d.dot(v_axis) / h + 0.5;
                    if glyph.covers(u, v) {
                        hits += 1;
                    }
                }
            }
            if hits >= needed {
                canvas.set(px, py);
            }
        }
    }
}

/// Renders the destylized label of `ann` at `size = (width, height)`.
///
/// `keep` restricts rendering to the listed instance indices (`None` renders
/// all). Ignore-flagged instances are never drawn; instances whose geometry
/// cannot produce slots are skipped and reported.
pub fn render_label(
    ann: &SceneAnnotation,
    glyphs: &GlyphSet,
    size: (usize, usize),
    keep: Option<&[usize]>,
) -> Result<RenderOutput> {
    if size.0 == 0 || size.1 == 0 || ann.width == 0 || ann.height == 0 {
        return Err(OdmError::Domain(format!(
            "render size {size:?} and annotation size {}x{} must be positive",
            ann.width, ann.height
        )));
    }
    let n = ann.instances.len();
    let mut selected = vec![keep.is_none(); n];
    if let Some(keep) = keep {
        for &i in keep {
            if i >= n {
                return Err(OdmError::Domain(format!("keep index {i} out of range for {n} instances")));
            }
            selected[i] = true;
        }
    }

    let mut out = RenderOutput {
        canvas: LabelCanvas::new(size.0, size.1),
        rendered: Vec::new(),
        skipped: Vec::new(),
    };
    for (index, inst) in ann.instances.iter().enumerate() {
        if !selected[index] || inst.ignore {
            continue;
        }
        match instance_slots(ann, index, size) {
            Ok(slots) => {
                for (slot, ch) in slots.iter().zip(inst.text.chars()) {
                    if ch.is_whitespace() {
                        continue;
                    }
                    draw_glyph(&mut out.canvas, slot, glyphs.lookup(ch));
                }
                out.rendered.push(index);
            }
            Err(e) => {
                log::warn!("{}: skipping instance {index}: {e}", ann.image_id);
                out.skipped.push(SkippedInstance {
                    index,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}
