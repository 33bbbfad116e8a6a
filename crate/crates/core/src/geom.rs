//! Planar geometry for annotations, character placement and region scoring.
//!
//! Coordinates are pixels with `y` pointing down. Under that convention the
//! shoelace formula is positive for the top-left, top-right, bottom-right,
//! bottom-left vertex order used by [`Quad`], and every [`Polygon`] is stored
//! with that (positive) orientation.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use crate::error::{OdmError, Result};

/// Areas below this are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn lerp(self, o: Point2, t: f64) -> Point2 {
        Point2::new(self.x + (o.x - self.x) * t, self.y + (o.y - self.y) * t)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// Shoelace area; positive for the orientation used throughout this crate.
pub fn signed_area(pts: &[Point2]) -> f64 {
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        acc += pts[i].cross(pts[(i + 1) % n]);
    }
    acc * 0.5
}

fn check_finite(pts: &[Point2]) -> Result<()> {
    if pts.iter().all(Point2::is_finite) {
        Ok(())
    } else {
        Err(OdmError::Geometry("non-finite coordinate".into()))
    }
}

fn segments_cross(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = (b - a).cross(c - a);
    let d2 = (b - a).cross(d - a);
    let d3 = (d - c).cross(a - c);
    let d4 = (d - c).cross(b - c);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on_seg = |p: Point2, q: Point2, r: Point2| {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    (d1 == 0.0 && on_seg(a, b, c))
        || (d2 == 0.0 && on_seg(a, b, d))
        || (d3 == 0.0 && on_seg(c, d, a))
        || (d4 == 0.0 && on_seg(c, d, b))
}

/// True when no two non-adjacent edges of the closed ring touch.
pub fn is_simple(pts: &[Point2]) -> bool {
    let n = pts.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_cross(a, b, pts[j], pts[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Crossing-number containment test (boundary points may land on either side).
pub fn point_in_ring(pts: &[Point2], p: Point2) -> bool {
    let n = pts.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (pts[i], pts[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - a.lerp(b, t)).norm()
}

/// Euclidean distance from `p` to the closed region bounded by `pts`; zero inside.
pub fn ring_distance(pts: &[Point2], p: Point2) -> f64 {
    if point_in_ring(pts, p) {
        return 0.0;
    }
    let n = pts.len();
    (0..n)
        .map(|i| point_segment_distance(p, pts[i], pts[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

/// Four corners ordered top-left, top-right, bottom-right, bottom-left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub p: [Point2; 4],
}

impl Quad {
    /// Validates the corners exactly as given.
    pub fn new(p: [Point2; 4]) -> Result<Self> {
        check_finite(&p)?;
        let area = signed_area(&p);
        if area <= DEGENERATE_AREA {
            return Err(OdmError::Geometry(format!(
                "quad has non-positive area {area:.3e} under TL,TR,BR,BL order"
            )));
        }
        if !is_simple(&p) {
            return Err(OdmError::Geometry("quad is self-intersecting".into()));
        }
        Ok(Quad { p })
    }

    /// Like [`Quad::new`], but accepts the opposite winding by mirroring the
    /// order around the first corner.
    pub fn normalized(p: [Point2; 4]) -> Result<Self> {
        check_finite(&p)?;
        if signed_area(&p) < 0.0 {
            Quad::new([p[0], p[3], p[2], p[1]])
        } else {
            Quad::new(p)
        }
    }

    pub fn axis_aligned(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Quad::new([
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ])
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.p)
    }

    pub fn centroid(&self) -> Point2 {
        let s = self.p.iter().fold(Point2::default(), |acc, &q| acc + q);
        s * 0.25
    }

    pub fn contains(&self, pt: Point2) -> bool {
        point_in_ring(&self.p, pt)
    }

    pub fn distance(&self, pt: Point2) -> f64 {
        ring_distance(&self.p, pt)
    }

    /// `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        bounds(&self.p)
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon { pts: self.p.to_vec() }
    }
}

pub(crate) fn bounds(pts: &[Point2]) -> (f64, f64, f64, f64) {
    pts.iter().fold(
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), p| (a.min(p.x), b.min(p.y), c.max(p.x), d.max(p.y)),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicBezier {
    pub c: [Point2; 4],
}

impl CubicBezier {
    pub fn new(c: [Point2; 4]) -> Result<Self> {
        check_finite(&c)?;
        Ok(CubicBezier { c })
    }

    /// Straight segment from `a` to `b` expressed as a cubic.
    pub fn line(a: Point2, b: Point2) -> Self {
        CubicBezier {
            c: [a, a.lerp(b, 1.0 / 3.0), a.lerp(b, 2.0 / 3.0), b],
        }
    }

    fn reversed(&self) -> Self {
        let c = self.c;
        CubicBezier {
            c: [c[3], c[2], c[1], c[0]],
        }
    }
}

/// Evaluates the curve with the cubic Bernstein basis.
pub fn bezier_point(curve: &CubicBezier, t: f64) -> Result<Point2> {
    if !(0.0..=1.0).contains(&t) {
        return Err(OdmError::Domain(format!("bezier parameter {t} outside [0, 1]")));
    }
    let c = &curve.c;
    if t == 0.0 {
        return Ok(c[0]);
    }
    if t == 1.0 {
        return Ok(c[3]);
    }
    let s = 1.0 - t;
    let b0 = s * s * s;
    let b1 = 3.0 * s * s * t;
    let b2 = 3.0 * s * t * t;
    let b3 = t * t * t;
    Ok(Point2::new(
        b0 * c[0].x + b1 * c[1].x + b2 * c[2].x + b3 * c[3].x,
        b0 * c[0].y + b1 * c[1].y + b2 * c[2].y + b3 * c[3].y,
    ))
}

/// Upper and lower boundary curves of a curved text region, both running
/// left to right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BezierPair {
    pub top: CubicBezier,
    pub bottom: CubicBezier,
}

const PAIR_SAMPLES: usize = 32;

impl BezierPair {
    pub fn new(top: CubicBezier, bottom: CubicBezier) -> Result<Self> {
        let pair = BezierPair { top, bottom };
        let area = signed_area(&pair.outline(PAIR_SAMPLES));
        if area.abs() <= DEGENERATE_AREA {
            return Err(OdmError::Geometry(
                "bezier pair encloses no area (top and bottom coincide)".into(),
            ));
        }
        Ok(pair)
    }

    /// Builds a pair from 8 control points (top 4 then bottom 4). A bottom
    /// curve given right to left, as in ABCNet-style files, is flipped.
    pub fn from_points(pts: &[Point2; 8]) -> Result<Self> {
        let top = CubicBezier::new([pts[0], pts[1], pts[2], pts[3]])?;
        let mut bottom = CubicBezier::new([pts[4], pts[5], pts[6], pts[7]])?;
        let same = (bottom.c[0] - top.c[0]).norm() + (bottom.c[3] - top.c[3]).norm();
        let flipped = (bottom.c[3] - top.c[0]).norm() + (bottom.c[0] - top.c[3]).norm();
        if flipped < same {
            bottom = bottom.reversed();
        }
        BezierPair::new(top, bottom)
    }

    pub fn control_points(&self) -> [Point2; 8] {
        let (t, b) = (self.top.c, self.bottom.c);
        [t[0], t[1], t[2], t[3], b[0], b[1], b[2], b[3]]
    }

    /// Closed ring: `samples` points along the top, then the bottom reversed.
    pub fn outline(&self, samples: usize) -> Vec<Point2> {
        let n = samples.max(2);
        let at = |curve: &CubicBezier, i: usize| {
            bezier_point(curve, i as f64 / (n - 1) as f64).expect("parameter within [0, 1]")
        };
        let mut ring: Vec<Point2> = (0..n).map(|i| at(&self.top, i)).collect();
        ring.extend((0..n).rev().map(|i| at(&self.bottom, i)));
        ring
    }
}

/// Footprint for one character: a quad plus the glyph rotation in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharSlot {
    pub quad: Quad,
    pub angle: f64,
}

fn normalize_angle(a: f64) -> f64 {
    if a <= -PI {
        a + 2.0 * PI
    } else if a > PI {
        a - 2.0 * PI
    } else {
        a
    }
}

fn direction_angle(from: Point2, to: Point2) -> f64 {
    normalize_angle((to.y - from.y).atan2(to.x - from.x))
}

/// Splits a quad into `n_chars` slots with equal parameter steps along the
/// top and bottom edges.
pub fn char_slots_quad(quad: &Quad, n_chars: usize) -> Result<Vec<CharSlot>> {
    if n_chars == 0 {
        return Err(OdmError::Domain("n_chars must be at least 1".into()));
    }
    if quad.area() <= DEGENERATE_AREA {
        return Err(OdmError::Geometry("degenerate quad".into()));
    }
    let [tl, tr, br, bl] = quad.p;
    let angle = direction_angle(tl, tr);
    let n = n_chars as f64;
    (0..n_chars)
        .map(|i| {
            let (t0, t1) = (i as f64 / n, (i + 1) as f64 / n);
            let q = Quad::new([tl.lerp(tr, t0), tl.lerp(tr, t1), bl.lerp(br, t1), bl.lerp(br, t0)])?;
            Ok(CharSlot { quad: q, angle })
        })
        .collect()
}

/// Splits a curved region into `n_chars` slots. Each slot's angle follows
/// the chord from its top-left point to the next slot's top-left point; the
/// final slot repeats its predecessor's angle.
pub fn char_slots_bezier(pair: &BezierPair, n_chars: usize) -> Result<Vec<CharSlot>> {
    if n_chars == 0 {
        return Err(OdmError::Domain("n_chars must be at least 1".into()));
    }
    if signed_area(&pair.outline(PAIR_SAMPLES)).abs() <= DEGENERATE_AREA {
        return Err(OdmError::Geometry("degenerate bezier pair".into()));
    }
    let n = n_chars as f64;
    let tops = (0..=n_chars)
        .map(|i| bezier_point(&pair.top, i as f64 / n))
        .collect::<Result<Vec<_>>>()?;
    let bottoms = (0..=n_chars)
        .map(|i| bezier_point(&pair.bottom, i as f64 / n))
        .collect::<Result<Vec<_>>>()?;

    let mut slots = Vec::with_capacity(n_chars);
    for i in 0..n_chars {
        let quad = Quad::new([tops[i], tops[i + 1], bottoms[i + 1], bottoms[i]])?;
        let angle = if i + 1 < n_chars || n_chars == 1 {
            direction_angle(tops[i], tops[i + 1])
        } else {
            slots.last().map(|s: &CharSlot| s.angle).unwrap_or_default()
        };
        slots.push(CharSlot { quad, angle });
    }
    Ok(slots)
}

/// Simple polygon with positive orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub pts: Vec<Point2>,
}

impl Polygon {
    pub fn new(mut pts: Vec<Point2>) -> Result<Self> {
        if pts.len() < 3 {
            return Err(OdmError::Geometry(format!(
                "polygon needs at least 3 points, got {}",
                pts.len()
            )));
        }
        check_finite(&pts)?;
        let area = signed_area(&pts);
        if area.abs() <= DEGENERATE_AREA {
            return Err(OdmError::Geometry(format!("polygon area {area:.3e} is degenerate")));
        }
        if !is_simple(&pts) {
            return Err(OdmError::Geometry("polygon is self-intersecting".into()));
        }
        if area < 0.0 {
            pts.reverse();
        }
        Ok(Polygon { pts })
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.pts)
    }

    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        bounds(&self.pts)
    }

    fn same_ring(&self, other: &Polygon) -> bool {
        let n = self.pts.len();
        n == other.pts.len()
            && (0..n).any(|shift| (0..n).all(|i| self.pts[i] == other.pts[(i + shift) % n]))
    }
}

/// Clips `subject` against a convex, positively oriented `clip` ring
/// (Sutherland–Hodgman).
pub(crate) fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut out = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % m]);
        let edge = b - a;
        let inside = |p: Point2| edge.cross(p - a) >= 0.0;
        let input = std::mem::take(&mut out);
        let k = input.len();
        for j in 0..k {
            let cur = input[j];
            let prev = input[(j + k - 1) % k];
            let (cin, pin) = (inside(cur), inside(prev));
            if cin != pin {
                let d = cur - prev;
                let denom = edge.cross(d);
                if denom != 0.0 {
                    let t = edge.cross(a - prev) / denom;
                    out.push(prev + d * t);
                }
            }
            if cin {
                out.push(cur);
            }
        }
    }
    out
}

/// Fan triangles from the first vertex with their orientation signs.
fn signed_fan(pts: &[Point2]) -> Vec<([Point2; 3], f64)> {
    (1..pts.len() - 1)
        .filter_map(|i| {
            let tri = [pts[0], pts[i], pts[i + 1]];
            let a = signed_area(&tri);
            if a > 0.0 {
                Some((tri, 1.0))
            } else if a < 0.0 {
                Some(([tri[0], tri[2], tri[1]], -1.0))
            } else {
                None
            }
        })
        .collect()
}

/// Area of the intersection of two simple polygons.
///
/// Each polygon's indicator is a signed sum of fan-triangle indicators, so
/// the intersection area is the signed sum of triangle–triangle overlaps,
/// each of which is a convex clip.
pub fn intersection_area(a: &Polygon, b: &Polygon) -> f64 {
    let (ab, bb) = (a.bounds(), b.bounds());
    if ab.2 <= bb.0 || bb.2 <= ab.0 || ab.3 <= bb.1 || bb.3 <= ab.1 {
        return 0.0;
    }
    let fa = signed_fan(&a.pts);
    let fb = signed_fan(&b.pts);
    let mut total = 0.0;
    for (ta, sa) in &fa {
        for (tb, sb) in &fb {
            let piece = clip_convex(ta, tb);
            if piece.len() >= 3 {
                total += sa * sb * signed_area(&piece);
            }
        }
    }
    total.max(0.0)
}

/// Intersection over union of two simple polygons, in `[0, 1]`.
pub fn polygon_iou(a: &Polygon, b: &Polygon) -> Result<f64> {
    let (area_a, area_b) = (a.area(), b.area());
    if area_a <= DEGENERATE_AREA || area_b <= DEGENERATE_AREA {
        return Err(OdmError::Geometry("degenerate polygon in IoU".into()));
    }
    if a.same_ring(b) {
        return Ok(1.0);
    }
    let inter = intersection_area(a, b).min(area_a).min(area_b);
    let union = area_a + area_b - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

/// Convex hull (Andrew's monotone chain), positively oriented, collinear
/// points dropped.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let turn = |o: Point2, a: Point2, b: Point2| (a - o).cross(b - o);
    let mut lower: Vec<Point2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && turn(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && turn(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}
