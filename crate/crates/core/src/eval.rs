//! Detection scoring: precision, recall and hmean at an IoU threshold, plus
//! extraction of region polygons from binary masks.

use serde::{Deserialize, Serialize};

use crate::annot::{SceneAnnotation, Shape};
use crate::geom::{convex_hull, intersection_area, polygon_iou, Point2, Polygon, DEGENERATE_AREA};
use crate::glyph::LabelCanvas;
use crate::error::Result;

pub const DEFAULT_IOU_THRESH: f64 = 0.5;
pub const DEFAULT_MIN_AREA: usize = 16;
/// Samples per Bezier side when a curved region is turned into a polygon.
const BEZIER_OUTLINE_SAMPLES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetResult {
    pub matches: Vec<Match>,
    /// Predictions and ground truths that took part (degenerate ones excluded).
    pub num_preds: usize,
    pub num_gts: usize,
    pub precision: f64,
    pub recall: f64,
    pub hmean: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean with 0/0 taken as 0.
pub fn hmean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl DetResult {
    fn from_counts(matches: Vec<Match>, num_preds: usize, num_gts: usize) -> Self {
        let precision = ratio(matches.len(), num_preds);
        let recall = ratio(matches.len(), num_gts);
        DetResult {
            matches,
            num_preds,
            num_gts,
            precision,
            recall,
            hmean: hmean(precision, recall),
        }
    }
}

fn usable(p: &Polygon, what: &str, idx: usize) -> bool {
    let ok = p.pts.len() >= 3 && p.pts.iter().all(|q| q.is_finite()) && p.area() > DEGENERATE_AREA;
    if !ok {
        log::warn!("skipping degenerate {what} polygon {idx}");
    }
    ok
}

/// Greedy one-to-one matching: candidate pairs with IoU at or above
/// `iou_thresh` are taken in descending IoU order, skipping any pair whose
/// prediction or ground truth is already matched.
pub fn score(preds: &[Polygon], gts: &[Polygon], iou_thresh: f64) -> DetResult {
    let pv: Vec<usize> = (0..preds.len()).filter(|&i| usable(&preds[i], "prediction", i)).collect();
    let gv: Vec<usize> = (0..gts.len()).filter(|&j| usable(&gts[j], "ground-truth", j)).collect();
    let mut pairs = Vec::new();
    for &i in &pv {
        for &j in &gv {
            match polygon_iou(&preds[i], &gts[j]) {
                Ok(iou) if iou >= iou_thresh => pairs.push(Match { pred: i, gt: j, iou }),
                Ok(_) => {}
                Err(e) => log::warn!("skipping pair ({i}, {j}): {e}"),
            }
        }
    }
    pairs.sort_by(|a, b| b.iou.total_cmp(&a.iou).then(a.pred.cmp(&b.pred)).then(a.gt.cmp(&b.gt)));
    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut matches = Vec::new();
    for m in pairs {
        if !pred_used[m.pred] && !gt_used[m.gt] {
            pred_used[m.pred] = true;
            gt_used[m.gt] = true;
            matches.push(m);
        }
    }
    DetResult::from_counts(matches, pv.len(), gv.len())
}

/// Region polygon of an annotated shape.
pub fn shape_region(shape: &Shape) -> Result<Polygon> {
    match shape {
        Shape::Quad(q) => Ok(q.to_polygon()),
        Shape::Polygon(p) => Ok(p.clone()),
        Shape::Bezier(b) => Polygon::new(b.outline(BEZIER_OUTLINE_SAMPLES)),
    }
}

/// Ground-truth regions of a scene split into scored and don't-care sets.
pub fn scene_regions(ann: &SceneAnnotation) -> (Vec<Polygon>, Vec<Polygon>) {
    let (mut care, mut ignored) = (Vec::new(), Vec::new());
    for (i, inst) in ann.instances.iter().enumerate() {
        match shape_region(&inst.shape) {
            Ok(p) if inst.ignore => ignored.push(p),
            Ok(p) => care.push(p),
            Err(e) => log::warn!("{}: instance {i} has no usable region: {e}", ann.image_id),
        }
    }
    (care, ignored)
}

/// Scores predictions against one annotated scene. Predictions lying mostly
/// (more than half their area) inside a don't-care region are discarded first.
pub fn score_scene(preds: &[Polygon], ann: &SceneAnnotation, iou_thresh: f64) -> DetResult {
    let (care, ignored) = scene_regions(ann);
    let kept: Vec<Polygon> = preds
        .iter()
        .filter(|p| {
            let area = p.area();
            !ignored.iter().any(|g| intersection_area(p, g) > 0.5 * area)
        })
        .cloned()
        .collect();
    score(&kept, &care, iou_thresh)
}

/// Connected foreground components (8-neighbourhood) with at least
/// `min_area` pixels, each returned as the convex hull of its pixel squares.
pub fn mask_to_regions(canvas: &LabelCanvas, min_area: usize) -> Vec<Polygon> {
    let (w, h) = (canvas.width(), canvas.height());
    let px = canvas.pixels();
    let mut seen = vec![false; w * h];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if px[start] == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut component = Vec::new();
        while let Some(k) = stack.pop() {
            component.push(k);
            let (x, y) = ((k % w) as isize, (k / w) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let n = ny as usize * w + nx as usize;
                    if px[n] != 0 && !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        if component.len() < min_area.max(1) {
            continue;
        }
        let corners: Vec<Point2> = component
            .iter()
            .flat_map(|&k| {
                let (x, y) = ((k % w) as f64, (k / w) as f64);
                [
                    Point2::new(x, y),
                    Point2::new(x + 1.0, y),
                    Point2::new(x + 1.0, y + 1.0),
                    Point2::new(x, y + 1.0),
                ]
            })
            .collect();
        match Polygon::new(convex_hull(&corners)) {
            Ok(p) => regions.push(p),
            Err(e) => log::warn!("dropping component of {} px: {e}", component.len()),
        }
    }
    regions
}

/// Dataset-level report; counts are pooled over images before the ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub hmean: f64,
    pub num_images: usize,
}

pub fn aggregate(results: &[DetResult]) -> ScoreReport {
    let matched: usize = results.iter().map(|r| r.matches.len()).sum();
    let preds: usize = results.iter().map(|r| r.num_preds).sum();
    let gts: usize = results.iter().map(|r| r.num_gts).sum();
    let precision = ratio(matched, preds);
    let recall = ratio(matched, gts);
    ScoreReport {
        precision,
        recall,
        hmean: hmean(precision, recall),
        num_images: results.len(),
    }
}
