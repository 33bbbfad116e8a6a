//! Glyph sets and destylized label rendering.
//!
//! Every glyph lives in a unit em box: `u` runs left to right over the
//! advance width, `v` runs top to bottom from ascender to descender.

mod builtin;
mod render;

use std::path::Path;

use crate::error::{OdmError, Result};
use crate::geom::Point2;

pub use render::{
    instance_slots, render_label, LabelCanvas, RenderOutput, SkippedInstance, COVERAGE_THRESHOLD,
    SAMPLES_PER_AXIS,
};

const FIRST_PRINTABLE: u32 = 0x20;
const LAST_PRINTABLE: u32 = 0x7e;

#[derive(Debug, Clone, PartialEq)]
enum GlyphShape {
    Empty,
    Bitmap { cols: u8, rows: Vec<u16> },
    /// Closed rings filled with the nonzero winding rule.
    Outline(Vec<Vec<Point2>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Glyph {
    shape: GlyphShape,
    /// Advance width in em units.
    pub advance: f64,
}

impl Glyph {
    /// Whether the em-box point `(u, v)` is ink.
    pub fn covers(&self, u: f64, v: f64) -> bool {
        if !(0.0..1.0).contains(&u) || !(0.0..1.0).contains(&v) {
            return false;
        }
        match &self.shape {
            GlyphShape::Empty => false,
            GlyphShape::Bitmap { cols, rows } => {
                let c = (u * *cols as f64) as u32;
                let r = (v * rows.len() as f64) as usize;
                rows[r] >> (*cols as u32 - 1 - c) & 1 == 1
            }
            GlyphShape::Outline(rings) => winding(rings, Point2::new(u, v)) != 0,
        }
    }

    pub fn is_blank(&self) -> bool {
        match &self.shape {
            GlyphShape::Empty => true,
            GlyphShape::Bitmap { rows, .. } => rows.iter().all(|&r| r == 0),
            GlyphShape::Outline(rings) => rings.is_empty(),
        }
    }

    /// Samples the glyph at cell centres of a `cols x rows` grid.
    pub fn raster(&self, cols: usize, rows: usize) -> Vec<bool> {
        let mut out = Vec::with_capacity(cols * rows);
        for r in 0..rows {
            for c in 0..cols {
                out.push(self.covers((c as f64 + 0.5) / cols as f64, (r as f64 + 0.5) / rows as f64));
            }
        }
        out
    }

    /// Hollow box drawn for characters outside the set.
    fn tofu() -> Glyph {
        let ring = |a: f64, b: f64, rev: bool| {
            let mut r = vec![
                Point2::new(a, a),
                Point2::new(b, a),
                Point2::new(b, b),
                Point2::new(a, b),
            ];
            if rev {
                r.reverse();
            }
            r
        };
        Glyph {
            shape: GlyphShape::Outline(vec![ring(0.15, 0.85, false), ring(0.3, 0.7, true)]),
            advance: 1.0,
        }
    }
}

fn winding(rings: &[Vec<Point2>], p: Point2) -> i32 {
    let mut w = 0;
    for ring in rings {
        let n = ring.len();
        for i in 0..n {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            if a.y <= p.y {
                if b.y > p.y && (b - a).cross(p - a) > 0.0 {
                    w += 1;
                }
            } else if b.y <= p.y && (b - a).cross(p - a) < 0.0 {
                w -= 1;
            }
        }
    }
    w
}

/// Character to glyph mapping covering printable ASCII.
#[derive(Debug, Clone)]
pub struct GlyphSet {
    pub name: String,
    ascii: Vec<Glyph>,
    fallback: Glyph,
}

impl GlyphSet {
    /// Glyph for `ch`; anything outside printable ASCII gets the fallback.
    pub fn lookup(&self, ch: char) -> &Glyph {
        let code = ch as u32;
        if (FIRST_PRINTABLE..=LAST_PRINTABLE).contains(&code) {
            &self.ascii[(code - FIRST_PRINTABLE) as usize]
        } else {
            &self.fallback
        }
    }

    pub fn fallback(&self) -> &Glyph {
        &self.fallback
    }

    pub fn is_covered(&self, ch: char) -> bool {
        (FIRST_PRINTABLE..=LAST_PRINTABLE).contains(&(ch as u32))
    }
}

/// Embedded monospace set; needs no external assets.
pub fn builtin_font() -> GlyphSet {
    let ascii = builtin::ASCII_BITMAPS
        .iter()
        .map(|rows| Glyph {
            shape: if rows.iter().all(|&r| r == 0) {
                GlyphShape::Empty
            } else {
                GlyphShape::Bitmap {
                    cols: builtin::CELL_COLS,
                    rows: rows.to_vec(),
                }
            },
            advance: 1.0,
        })
        .collect();
    GlyphSet {
        name: "builtin-mono".into(),
        ascii,
        fallback: Glyph::tofu(),
    }
}

pub fn load_font(path: impl AsRef<Path>) -> Result<GlyphSet> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| OdmError::io(path, e))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("font")
        .to_string();
    font_from_bytes(&data, name)
}

struct Flattener {
    rings: Vec<Vec<Point2>>,
    current: Vec<Point2>,
    to_em: Box<dyn Fn(f32, f32) -> Point2>,
}

const CURVE_STEPS: usize = 8;

impl Flattener {
    fn last(&self) -> Point2 {
        *self.current.last().unwrap_or(&Point2::default())
    }

    fn finish(&mut self) {
        if self.current.len() >= 3 {
            self.rings.push(std::mem::take(&mut self.current));
        } else {
            self.current.clear();
        }
    }
}

impl ttf_parser::OutlineBuilder for Flattener {
    fn move_to(&mut self, x: f32, y: f32) {
        self.finish();
        self.current.push((self.to_em)(x, y));
    }

    fn line_to(&mut self, x: f32, y: f32) {
        self.current.push((self.to_em)(x, y));
    }

    fn quad_to(&mut self, x1: f32, y1: f32, x: f32, y: f32) {
        let p0 = self.last();
        let (c, p) = ((self.to_em)(x1, y1), (self.to_em)(x, y));
        for i in 1..=CURVE_STEPS {
            let t = i as f64 / CURVE_STEPS as f64;
            self.current.push(p0.lerp(c, t).lerp(c.lerp(p, t), t));
        }
    }

    fn curve_to(&mut self, x1: f32, y1: f32, x2: f32, y2: f32, x: f32, y: f32) {
        let p0 = self.last();
        let (c1, c2, p) = ((self.to_em)(x1, y1), (self.to_em)(x2, y2), (self.to_em)(x, y));
        for i in 1..=CURVE_STEPS {
            let t = i as f64 / CURVE_STEPS as f64;
            let a = p0.lerp(c1, t).lerp(c1.lerp(c2, t), t);
            let b = c1.lerp(c2, t).lerp(c2.lerp(p, t), t);
            self.current.push(a.lerp(b, t));
        }
    }

    fn close(&mut self) {
        self.finish();
    }
}

/// Parses a TrueType/OpenType font and flattens the printable ASCII outlines.
pub fn font_from_bytes(data: &[u8], name: impl Into<String>) -> Result<GlyphSet> {
    let face = ttf_parser::Face::parse(data, 0).map_err(|e| OdmError::Font(format!("cannot parse font: {e}")))?;
    let ascender = face.ascender() as f64;
    let descender = face.descender() as f64;
    let line = ascender - descender;
    if line <= 0.0 {
        return Err(OdmError::Font("font reports a non-positive line height".into()));
    }
    let upem = face.units_per_em() as f64;
    let tofu = Glyph::tofu();
    let mut ascii = Vec::with_capacity(95);
    for code in FIRST_PRINTABLE..=LAST_PRINTABLE {
        let ch = char::from_u32(code).expect("printable ASCII");
        let Some(gid) = face.glyph_index(ch) else {
            ascii.push(tofu.clone());
            continue;
        };
        let advance = face.glyph_hor_advance(gid).map(f64::from).filter(|&a| a > 0.0).unwrap_or(upem);
        let mut fl = Flattener {
            rings: Vec::new(),
            current: Vec::new(),
            to_em: Box::new(move |x, y| Point2::new(x as f64 / advance, (ascender - y as f64) / line)),
        };
        face.outline_glyph(gid, &mut fl);
        fl.finish();
        let shape = if fl.rings.is_empty() {
            GlyphShape::Empty
        } else {
            GlyphShape::Outline(fl.rings)
        };
        ascii.push(Glyph {
            shape,
            advance: advance / upem,
        });
    }
    if ascii.iter().all(Glyph::is_blank) {
        return Err(OdmError::Font("font has no printable ASCII outlines".into()));
    }
    Ok(GlyphSet {
        name: name.into(),
        ascii,
        fallback: tofu,
    })
}
