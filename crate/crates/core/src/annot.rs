//! Annotation records, importers and the canonical JSON-lines format.
//!
//! One canonical record per line:
//!
//! ```text
//! {"image_id": str, "width": int, "height": int,
//!  "instances": [{"kind": "quad"|"polygon"|"bezier", "points": [[x,y],...],
//!                 "text": str, "conf": float?, "ignore": bool}]}
//! ```
//!
//! `bezier` carries exactly 8 points: the top curve's control points, then
//! the bottom curve's, both left to right.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{OdmError, Result};
use crate::geom::{bounds, BezierPair, Point2, Polygon, Quad};

/// Transcription marking a region as "don't care".
pub const IGNORE_TEXT: &str = "###";

pub const DEFAULT_MIN_CONF: f64 = 0.9;
pub const DEFAULT_MIN_SIZE_PX: f64 = 32.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Quad(Quad),
    Polygon(Polygon),
    Bezier(BezierPair),
}

impl Shape {
    pub fn kind(&self) -> &'static str {
        match self {
            Shape::Quad(_) => "quad",
            Shape::Polygon(_) => "polygon",
            Shape::Bezier(_) => "bezier",
        }
    }

    pub fn points(&self) -> Vec<Point2> {
        match self {
            Shape::Quad(q) => q.p.to_vec(),
            Shape::Polygon(p) => p.pts.clone(),
            Shape::Bezier(b) => b.control_points().to_vec(),
        }
    }

    fn from_points(kind: &str, pts: &[Point2]) -> Result<Shape> {
        match kind {
            "quad" => {
                let arr: [Point2; 4] = pts.try_into().map_err(|_| {
                    OdmError::Geometry(format!("quad needs 4 points, got {}", pts.len()))
                })?;
                Ok(Shape::Quad(Quad::normalized(arr)?))
            }
            "polygon" => Ok(Shape::Polygon(Polygon::new(pts.to_vec())?)),
            "bezier" => {
                let arr: [Point2; 8] = pts.try_into().map_err(|_| {
                    OdmError::Geometry(format!("bezier needs 8 points, got {}", pts.len()))
                })?;
                Ok(Shape::Bezier(BezierPair::from_points(&arr)?))
            }
            other => Err(OdmError::Geometry(format!("unknown shape kind `{other}`"))),
        }
    }

    /// Applies `f` to every defining point and revalidates.
    pub fn map_points(&self, f: impl Fn(Point2) -> Point2) -> Result<Shape> {
        let pts: Vec<Point2> = self.points().into_iter().map(f).collect();
        Shape::from_points(self.kind(), &pts)
    }

    /// Axis-aligned bounding box of the defining points as `(w, h)`.
    pub fn bbox_size(&self) -> (f64, f64) {
        let (x0, y0, x1, y1) = bounds(&self.points());
        (x1 - x0, y1 - y0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextInstance {
    pub shape: Shape,
    pub text: String,
    pub confidence: Option<f64>,
    pub ignore: bool,
}

impl TextInstance {
    pub fn new(shape: Shape, text: impl Into<String>) -> Self {
        let text = text.into();
        let ignore = text == IGNORE_TEXT;
        TextInstance {
            shape,
            text,
            confidence: None,
            ignore,
        }
    }

    pub fn with_confidence(mut self, conf: f64) -> Self {
        self.confidence = Some(conf);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneAnnotation {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub instances: Vec<TextInstance>,
}

impl SceneAnnotation {
    pub fn new(image_id: impl Into<String>, width: u32, height: u32) -> Self {
        SceneAnnotation {
            image_id: image_id.into(),
            width,
            height,
            instances: Vec::new(),
        }
    }

    /// Clamps every shape into `[0, width] x [0, height]`.
    pub fn clamp_to_canvas(&mut self) -> Result<()> {
        let (w, h) = (self.width as f64, self.height as f64);
        for inst in &mut self.instances {
            let outside = inst
                .shape
                .points()
                .iter()
                .any(|p| p.x < 0.0 || p.y < 0.0 || p.x > w || p.y > h);
            if outside {
                inst.shape = inst
                    .shape
                    .map_points(|p| Point2::new(p.x.clamp(0.0, w), p.y.clamp(0.0, h)))?;
            }
        }
        Ok(())
    }
}

fn parse_coord(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| OdmError::Parse {
        line,
        message: format!("non-numeric coordinate `{}`", field.trim()),
    })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(OdmError::Parse {
            line,
            message: format!("non-finite coordinate `{}`", field.trim()),
        })
    }
}

/// Parses an ICDAR-style `x1,y1,...,x4,y4,transcription` line. Commas inside
/// the transcription are kept.
pub fn parse_quad_line(line: &str, line_no: usize) -> Result<TextInstance> {
    let line = line.trim_start_matches('\u{feff}').trim_end_matches(['\r', '\n']);
    let fields: Vec<&str> = line.splitn(9, ',').collect();
    if fields.len() < 9 {
        return Err(OdmError::Parse {
            line: line_no,
            message: format!("expected at least 9 comma-separated fields, got {}", fields.len()),
        });
    }
    let mut pts = [Point2::default(); 4];
    for (i, p) in pts.iter_mut().enumerate() {
        *p = Point2::new(
            parse_coord(fields[2 * i], line_no)?,
            parse_coord(fields[2 * i + 1], line_no)?,
        );
    }
    let text = fields[8].to_string();
    let quad = Quad::normalized(pts).map_err(|e| OdmError::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let inst = TextInstance::new(Shape::Quad(quad), text);
    if inst.text.is_empty() {
        return Err(OdmError::Parse {
            line: line_no,
            message: "empty transcription".into(),
        });
    }
    Ok(inst)
}

/// Parses one pseudo-label line: `<image path>\t<JSON array>` where each
/// element is `{"transcription": str, "points": [[x,y],...], "score": f}`.
/// Four points become a quad, more become a polygon.
pub fn parse_weak_line(line: &str, line_no: usize, width: u32, height: u32) -> Result<SceneAnnotation> {
    let line = line.trim_start_matches('\u{feff}').trim_end_matches(['\r', '\n']);
    let (path, body) = line.split_once('\t').ok_or_else(|| OdmError::Parse {
        line: line_no,
        message: "expected `<image path>\\t<json>`".into(),
    })?;
    let image_id = Path::new(path.trim())
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(path)
        .to_string();
    let value: Value = serde_json::from_str(body).map_err(|e| OdmError::Parse {
        line: line_no,
        message: format!("invalid JSON: {e}"),
    })?;
    let items = value.as_array().ok_or_else(|| schema(line_no, "instances", "expected an array"))?;
    let mut ann = SceneAnnotation::new(image_id, width, height);
    for item in items {
        let obj = item
            .as_object()
            .ok_or_else(|| schema(line_no, "instances", "expected objects"))?;
        let text = get_str(obj, "transcription", line_no)?;
        let pts = get_points(obj, line_no)?;
        let score = obj
            .get("score")
            .and_then(Value::as_f64)
            .ok_or_else(|| schema(line_no, "score", "missing or not a number"))?;
        let kind = if pts.len() == 4 { "quad" } else { "polygon" };
        let shape = Shape::from_points(kind, &pts).map_err(|e| schema(line_no, "points", &e.to_string()))?;
        ann.instances.push(TextInstance::new(shape, text).with_confidence(score));
    }
    ann.clamp_to_canvas()
        .map_err(|e| schema(line_no, "points", &e.to_string()))?;
    Ok(ann)
}

fn schema(line: usize, field: &str, message: &str) -> OdmError {
    OdmError::Schema {
        line,
        field: field.to_string(),
        message: message.to_string(),
    }
}

fn get_str(obj: &Map<String, Value>, field: &str, line: usize) -> Result<String> {
    obj.get(field)
        .ok_or_else(|| schema(line, field, "missing"))?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| schema(line, field, "expected a string"))
}

fn get_dim(obj: &Map<String, Value>, field: &str, line: usize) -> Result<u32> {
    let v = obj
        .get(field)
        .ok_or_else(|| schema(line, field, "missing"))?
        .as_u64()
        .ok_or_else(|| schema(line, field, "expected a positive integer"))?;
    if v == 0 || v > u32::MAX as u64 {
        return Err(schema(line, field, "expected a positive integer"));
    }
    Ok(v as u32)
}

fn get_points(obj: &Map<String, Value>, line: usize) -> Result<Vec<Point2>> {
    let arr = obj
        .get("points")
        .ok_or_else(|| schema(line, "points", "missing"))?
        .as_array()
        .ok_or_else(|| schema(line, "points", "expected an array of [x, y]"))?;
    arr.iter()
        .map(|p| {
            let xy = p.as_array().filter(|a| a.len() == 2);
            let xy = xy.ok_or_else(|| schema(line, "points", "expected [x, y] pairs"))?;
            let x = xy[0].as_f64().ok_or_else(|| schema(line, "points", "non-numeric coordinate"))?;
            let y = xy[1].as_f64().ok_or_else(|| schema(line, "points", "non-numeric coordinate"))?;
            Ok(Point2::new(x, y))
        })
        .collect()
}

/// Parses one canonical record. `line_no` is only used in errors.
pub fn parse_canonical_line(line: &str, line_no: usize) -> Result<SceneAnnotation> {
    let value: Value = serde_json::from_str(line).map_err(|e| OdmError::Parse {
        line: line_no,
        message: format!("invalid JSON: {e}"),
    })?;
    let obj = value
        .as_object()
        .ok_or_else(|| schema(line_no, "record", "expected a JSON object"))?;
    let image_id = get_str(obj, "image_id", line_no)?;
    let width = get_dim(obj, "width", line_no)?;
    let height = get_dim(obj, "height", line_no)?;
    let items = obj
        .get("instances")
        .ok_or_else(|| schema(line_no, "instances", "missing"))?
        .as_array()
        .ok_or_else(|| schema(line_no, "instances", "expected an array"))?;

    let mut ann = SceneAnnotation::new(image_id, width, height);
    for item in items {
        let inst = item
            .as_object()
            .ok_or_else(|| schema(line_no, "instances", "expected objects"))?;
        let kind = get_str(inst, "kind", line_no)?;
        let pts = get_points(inst, line_no)?;
        let shape = match kind.as_str() {
            "quad" | "polygon" | "bezier" => Shape::from_points(&kind, &pts)
                .map_err(|e| schema(line_no, "points", &e.to_string()))?,
            _ => return Err(schema(line_no, "kind", "expected quad, polygon or bezier")),
        };
        let text = get_str(inst, "text", line_no)?;
        let confidence = match inst.get("conf") {
            None | Some(Value::Null) => None,
            Some(v) => {
                let c = v.as_f64().ok_or_else(|| schema(line_no, "conf", "expected a number"))?;
                if !(0.0..=1.0).contains(&c) {
                    return Err(schema(line_no, "conf", "expected a value in [0, 1]"));
                }
                Some(c)
            }
        };
        let ignore = match inst.get("ignore") {
            None => false,
            Some(v) => v.as_bool().ok_or_else(|| schema(line_no, "ignore", "expected a boolean"))?,
        };
        if text.is_empty() && !ignore {
            return Err(schema(line_no, "text", "empty transcription on a non-ignored instance"));
        }
        ann.instances.push(TextInstance {
            shape,
            text,
            confidence,
            ignore,
        });
    }
    ann.clamp_to_canvas()
        .map_err(|e| schema(line_no, "points", &e.to_string()))?;
    Ok(ann)
}

pub fn to_canonical_line(ann: &SceneAnnotation) -> String {
    let instances: Vec<Value> = ann
        .instances
        .iter()
        .map(|inst| {
            let pts: Vec<Value> = inst.shape.points().iter().map(|p| json!([p.x, p.y])).collect();
            let mut obj = Map::new();
            obj.insert("kind".into(), json!(inst.shape.kind()));
            obj.insert("points".into(), Value::Array(pts));
            obj.insert("text".into(), json!(inst.text));
            if let Some(c) = inst.confidence {
                obj.insert("conf".into(), json!(c));
            }
            obj.insert("ignore".into(), json!(inst.ignore));
            Value::Object(obj)
        })
        .collect();
    json!({
        "image_id": ann.image_id,
        "width": ann.width,
        "height": ann.height,
        "instances": instances,
    })
    .to_string()
}

/// Reads a canonical file. Blank lines are skipped; line numbers are 1-based.
pub fn read_canonical(path: impl AsRef<Path>) -> Result<Vec<SceneAnnotation>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| OdmError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| OdmError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_canonical_line(&line, i + 1)?);
    }
    Ok(out)
}

pub fn write_canonical(annotations: &[SceneAnnotation], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for ann in annotations {
        buf.extend_from_slice(to_canonical_line(ann).as_bytes());
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| OdmError::io(path, e))?;
    f.write_all(&buf).map_err(|e| OdmError::io(path, e))
}

/// Keeps instances whose confidence exceeds `min_conf` and whose bounding
/// box's shorter side exceeds `min_size_px`. Both comparisons are strict.
pub fn filter_weak(ann: &SceneAnnotation, min_conf: f64, min_size_px: f64) -> Result<SceneAnnotation> {
    let mut out = SceneAnnotation::new(ann.image_id.clone(), ann.width, ann.height);
    for (i, inst) in ann.instances.iter().enumerate() {
        let conf = inst.confidence.ok_or_else(|| {
            OdmError::Validation(format!(
                "instance {i} of `{}` has no confidence; weak filtering needs pseudo-labels",
                ann.image_id
            ))
        })?;
        let (w, h) = inst.shape.bbox_size();
        if conf > min_conf && w.min(h) > min_size_px {
            out.instances.push(inst.clone());
        }
    }
    Ok(out)
}
