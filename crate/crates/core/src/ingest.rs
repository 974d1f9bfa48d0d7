//! Manifest parsing and the annotated-image record types.
//!
//! A manifest is UTF-8 JSON Lines, one image per line:
//!
//! ```json
//! {"image_id":"a1","subject_id":"s1","image_path":"img/a1.png","image_width":640,
//!  "image_height":480,"weight_kg":81.0,"height_m":1.8,
//!  "bbox":{"x":10,"y":20,"w":300,"h":440,"confidence":0.98},
//!  "keypoints":[[320,60,0.9], ...17 entries...]}
//! ```
//!
//! `bbox`, `keypoints` and `face_bbox` are optional. Keypoint visibility is
//! optional per entry and defaults to 1.0. Lines that parse but fail field
//! validation land in the reject list with a reason code; structural problems
//! that make a line unattributable (duplicate id, missing subject or
//! measurement) abort the load.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

pub const NUM_KEYPOINTS: usize = 17;

/// Plausible adult height range in meters (exclusive bounds).
pub const MIN_HEIGHT_M: f64 = 0.5;
pub const MAX_HEIGHT_M: f64 = 2.8;

/// COCO-17 keypoint order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeypointName {
    Nose = 0,
    LeftEye,
    RightEye,
    LeftEar,
    RightEar,
    LeftShoulder,
    RightShoulder,
    LeftElbow,
    RightElbow,
    LeftWrist,
    RightWrist,
    LeftHip,
    RightHip,
    LeftKnee,
    RightKnee,
    LeftAnkle,
    RightAnkle,
}

impl KeypointName {
    pub const ALL: [KeypointName; NUM_KEYPOINTS] = [
        KeypointName::Nose,
        KeypointName::LeftEye,
        KeypointName::RightEye,
        KeypointName::LeftEar,
        KeypointName::RightEar,
        KeypointName::LeftShoulder,
        KeypointName::RightShoulder,
        KeypointName::LeftElbow,
        KeypointName::RightElbow,
        KeypointName::LeftWrist,
        KeypointName::RightWrist,
        KeypointName::LeftHip,
        KeypointName::RightHip,
        KeypointName::LeftKnee,
        KeypointName::RightKnee,
        KeypointName::LeftAnkle,
        KeypointName::RightAnkle,
    ];

    pub const HEAD: [KeypointName; 5] = [
        KeypointName::Nose,
        KeypointName::LeftEye,
        KeypointName::RightEye,
        KeypointName::LeftEar,
        KeypointName::RightEar,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KeypointName::Nose => "nose",
            KeypointName::LeftEye => "left_eye",
            KeypointName::RightEye => "right_eye",
            KeypointName::LeftEar => "left_ear",
            KeypointName::RightEar => "right_ear",
            KeypointName::LeftShoulder => "left_shoulder",
            KeypointName::RightShoulder => "right_shoulder",
            KeypointName::LeftElbow => "left_elbow",
            KeypointName::RightElbow => "right_elbow",
            KeypointName::LeftWrist => "left_wrist",
            KeypointName::RightWrist => "right_wrist",
            KeypointName::LeftHip => "left_hip",
            KeypointName::RightHip => "right_hip",
            KeypointName::LeftKnee => "left_knee",
            KeypointName::RightKnee => "right_knee",
            KeypointName::LeftAnkle => "left_ankle",
            KeypointName::RightAnkle => "right_ankle",
        }
    }
}

/// BMI in kg/m².
pub fn compute_bmi(weight_kg: f64, height_m: f64) -> Result<f64> {
    if !(weight_kg > 0.0 && weight_kg.is_finite()) {
        return Err(Error::InvalidMeasurement(format!(
            "weight must be positive, got {weight_kg}"
        )));
    }
    if !(height_m > 0.0 && height_m.is_finite()) {
        return Err(Error::InvalidMeasurement(format!(
            "height must be positive, got {height_m}"
        )));
    }
    Ok(weight_kg / (height_m * height_m))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    weight_kg: f64,
    height_m: f64,
    bmi: f64,
}

impl Measurement {
    pub fn new(weight_kg: f64, height_m: f64) -> Result<Self> {
        let bmi = compute_bmi(weight_kg, height_m)?;
        if !(height_m > MIN_HEIGHT_M && height_m < MAX_HEIGHT_M) {
            return Err(Error::InvalidMeasurement(format!(
                "height {height_m} m outside ({MIN_HEIGHT_M}, {MAX_HEIGHT_M})"
            )));
        }
        Ok(Self {
            weight_kg,
            height_m,
            bmi,
        })
    }

    pub fn weight_kg(&self) -> f64 {
        self.weight_kg
    }

    pub fn height_m(&self) -> f64 {
        self.height_m
    }

    pub fn bmi(&self) -> f64 {
        self.bmi
    }
}

/// Axis-aligned person box in pixels, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    #[serde(rename = "w")]
    pub width: f64,
    #[serde(rename = "h")]
    pub height: f64,
    #[serde(default = "one")]
    pub confidence: f64,
}

fn one() -> f64 {
    1.0
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, width: f64, height: f64, confidence: f64) -> Result<Self> {
        let b = Self {
            x,
            y,
            width,
            height,
            confidence,
        };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.x, self.y, self.width, self.height, self.confidence]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::malformed("bbox", "non-finite coordinate"));
        }
        if self.width <= 0.0 || self.height <= 0.0 {
            return Err(Error::malformed("bbox", "non-positive extent"));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::malformed("bbox", "confidence outside [0, 1]"));
        }
        Ok(())
    }

    /// Intersection with the image frame, or `None` when nothing of the box
    /// remains inside it.
    pub fn clamp(&self, image_width: f64, image_height: f64) -> Option<BoundingBox> {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = (self.x + self.width).min(image_width);
        let y1 = (self.y + self.height).min(image_height);
        if x1 <= x0 || y1 <= y0 {
            return None;
        }
        Some(BoundingBox {
            x: x0,
            y: y0,
            width: x1 - x0,
            height: y1 - y0,
            confidence: self.confidence,
        })
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub visibility: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, visibility: f64) -> Self {
        Self { x, y, visibility }
    }
}

/// Exactly 17 keypoints in COCO order.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet([Keypoint; NUM_KEYPOINTS]);

impl KeypointSet {
    pub fn new(points: [Keypoint; NUM_KEYPOINTS]) -> Result<Self> {
        for p in &points {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::malformed("keypoints", "non-finite coordinate"));
            }
            if !(0.0..=1.0).contains(&p.visibility) {
                return Err(Error::malformed("keypoints", "visibility outside [0, 1]"));
            }
        }
        Ok(Self(points))
    }

    pub fn from_slice(points: &[Keypoint]) -> Result<Self> {
        let arr: [Keypoint; NUM_KEYPOINTS] = points.try_into().map_err(|_| {
            Error::malformed(
                "keypoints",
                format!("expected {NUM_KEYPOINTS} entries, got {}", points.len()),
            )
        })?;
        Self::new(arr)
    }

    pub fn get(&self, name: KeypointName) -> Keypoint {
        self.0[name.index()]
    }

    pub fn points(&self) -> &[Keypoint; NUM_KEYPOINTS] {
        &self.0
    }

    pub fn mean_visibility(&self) -> f64 {
        self.0.iter().map(|p| p.visibility).sum::<f64>() / NUM_KEYPOINTS as f64
    }

    /// Same set with every coordinate transformed by `f`.
    pub fn map_coords(&self, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> KeypointSet {
        let mut out = self.0;
        for p in out.iter_mut() {
            let (x, y) = f(p.x, p.y);
            p.x = x;
            p.y = y;
        }
        KeypointSet(out)
    }
}

/// One annotated image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub subject_id: String,
    pub image_path: String,
    pub image_width: u32,
    pub image_height: u32,
    pub bbox: Option<BoundingBox>,
    pub keypoints: Option<KeypointSet>,
    /// Externally supplied face box; overrides the keypoint face heuristic.
    pub face_bbox: Option<BoundingBox>,
    pub measurement: Measurement,
}

impl ImageRecord {
    /// Resolve `image_path` against the directory holding the manifest.
    pub fn resolve_image_path(&self, base_dir: &Path) -> PathBuf {
        let p = Path::new(&self.image_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    }

    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("image_id".into(), json!(self.image_id));
        obj.insert("subject_id".into(), json!(self.subject_id));
        obj.insert("image_path".into(), json!(self.image_path));
        obj.insert("image_width".into(), json!(self.image_width));
        obj.insert("image_height".into(), json!(self.image_height));
        obj.insert("weight_kg".into(), json!(self.measurement.weight_kg));
        obj.insert("height_m".into(), json!(self.measurement.height_m));
        if let Some(b) = &self.bbox {
            obj.insert("bbox".into(), json!(b));
        }
        if let Some(k) = &self.keypoints {
            let pts: Vec<[f64; 3]> = k.points().iter().map(|p| [p.x, p.y, p.visibility]).collect();
            obj.insert("keypoints".into(), json!(pts));
        }
        if let Some(b) = &self.face_bbox {
            obj.insert("face_bbox".into(), json!(b));
        }
        Value::Object(obj)
    }

    pub fn to_json_line(&self) -> String {
        self.to_json().to_string()
    }
}

/// Why a manifest line was not accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    MalformedRecord,
    InvalidMeasurement,
    InvalidDimensions,
    InvalidBbox,
    InvalidKeypoints,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::MalformedRecord => "malformed_record",
            RejectReason::InvalidMeasurement => "invalid_measurement",
            RejectReason::InvalidDimensions => "invalid_dimensions",
            RejectReason::InvalidBbox => "invalid_bbox",
            RejectReason::InvalidKeypoints => "invalid_keypoints",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    /// 1-based line number in the source manifest.
    pub line: usize,
    pub reason: RejectReason,
    /// The original line content; a JSON object when it parsed as one.
    pub original: Value,
}

impl Reject {
    /// Original object plus `reason` (and `line`); non-object lines are
    /// wrapped as `{"raw": ...}`.
    pub fn to_json_line(&self) -> String {
        let mut obj = match &self.original {
            Value::Object(m) => m.clone(),
            other => {
                let mut m = Map::new();
                m.insert("raw".into(), other.clone());
                m
            }
        };
        obj.insert("reason".into(), json!(self.reason.as_str()));
        obj.insert("line".into(), json!(self.line));
        Value::Object(obj).to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<ImageRecord>,
    pub rejects: Vec<Reject>,
}

impl Manifest {
    /// Number of non-blank input lines this manifest was built from.
    pub fn total_lines(&self) -> usize {
        self.records.len() + self.rejects.len()
    }
}

/// Outcome of parsing a single manifest line.
#[derive(Debug, Clone, PartialEq)]
pub enum LineOutcome {
    Accepted(ImageRecord),
    Rejected(Reject),
}

#[derive(Deserialize)]
struct RawRecord {
    image_id: Option<String>,
    subject_id: Option<String>,
    image_path: Option<String>,
    image_width: Option<u32>,
    image_height: Option<u32>,
    weight_kg: Option<f64>,
    height_m: Option<f64>,
    bbox: Option<BoundingBox>,
    keypoints: Option<Vec<Vec<f64>>>,
    face_bbox: Option<BoundingBox>,
}

/// Parse one non-blank manifest line. `line` is 1-based and only used for
/// diagnostics.
pub fn parse_record_line(text: &str, line: usize) -> Result<LineOutcome> {
    let reject = |reason, original| {
        Ok(LineOutcome::Rejected(Reject {
            line,
            reason,
            original,
        }))
    };
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(_) => return reject(RejectReason::MalformedRecord, Value::String(text.to_owned())),
    };
    if !value.is_object() {
        return reject(RejectReason::MalformedRecord, value);
    }
    let raw: RawRecord = match RawRecord::deserialize(&value) {
        Ok(r) => r,
        Err(_) => return reject(RejectReason::MalformedRecord, value),
    };

    let image_id = raw.image_id.ok_or(Error::MissingField {
        line,
        field: "image_id",
    })?;
    let subject_id = raw.subject_id.ok_or(Error::MissingField {
        line,
        field: "subject_id",
    })?;
    let weight = raw.weight_kg.ok_or(Error::MissingField {
        line,
        field: "weight_kg",
    })?;
    let height = raw.height_m.ok_or(Error::MissingField {
        line,
        field: "height_m",
    })?;
    if subject_id.is_empty() || image_id.is_empty() {
        return reject(RejectReason::MalformedRecord, value);
    }
    let Some(image_path) = raw.image_path else {
        return reject(RejectReason::MalformedRecord, value);
    };

    let measurement = match Measurement::new(weight, height) {
        Ok(m) => m,
        Err(_) => return reject(RejectReason::InvalidMeasurement, value),
    };
    let (image_width, image_height) = match (raw.image_width, raw.image_height) {
        (Some(w), Some(h)) if w > 0 && h > 0 => (w, h),
        _ => return reject(RejectReason::InvalidDimensions, value),
    };
    let bbox_ok = [raw.bbox, raw.face_bbox]
        .iter()
        .flatten()
        .all(|b| b.validate().is_ok());
    if !bbox_ok {
        return reject(RejectReason::InvalidBbox, value);
    }
    let keypoints = match raw.keypoints.map(|k| parse_keypoints(&k)).transpose() {
        Ok(k) => k,
        Err(_) => return reject(RejectReason::InvalidKeypoints, value),
    };

    Ok(LineOutcome::Accepted(ImageRecord {
        image_id,
        subject_id,
        image_path,
        image_width,
        image_height,
        bbox: raw.bbox,
        keypoints,
        face_bbox: raw.face_bbox,
        measurement,
    }))
}

fn parse_keypoints(entries: &[Vec<f64>]) -> Result<KeypointSet> {
    let points = entries
        .iter()
        .map(|e| match e.as_slice() {
            [x, y] => Ok(Keypoint::new(*x, *y, 1.0)),
            [x, y, v] => Ok(Keypoint::new(*x, *y, *v)),
            _ => Err(Error::malformed("keypoints", "entry must be [x, y] or [x, y, v]")),
        })
        .collect::<Result<Vec<_>>>()?;
    KeypointSet::from_slice(&points)
}

/// Parse a whole manifest held in memory. Blank lines are ignored.
pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    let outcomes = lines
        .par_iter()
        .map(|(no, l)| parse_record_line(l, *no).map(|o| (*no, o)))
        .collect::<Result<Vec<_>>>()?;

    let mut seen = HashSet::new();
    let mut manifest = Manifest::default();
    for (line, outcome) in outcomes {
        let id = match &outcome {
            LineOutcome::Accepted(r) => Some(r.image_id.as_str()),
            LineOutcome::Rejected(r) => r.original.get("image_id").and_then(Value::as_str),
        };
        if let Some(id) = id {
            if !seen.insert(id.to_owned()) {
                return Err(Error::DuplicateImageId {
                    line,
                    image_id: id.to_owned(),
                });
            }
        }
        match outcome {
            LineOutcome::Accepted(r) => manifest.records.push(r),
            LineOutcome::Rejected(r) => manifest.rejects.push(r),
        }
    }
    Ok(manifest)
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn write_records(path: &Path, records: &[ImageRecord]) -> Result<()> {
    write_lines(path, records.iter().map(ImageRecord::to_json_line))
}

pub fn write_rejects(path: &Path, rejects: &[Reject]) -> Result<()> {
    write_lines(path, rejects.iter().map(Reject::to_json_line))
}

pub(crate) fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut buf = Vec::new();
    for l in lines {
        buf.extend_from_slice(l.as_bytes());
        buf.push(b'\n');
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, weight: f64, height: f64) -> String {
        format!(
            r#"{{"image_id":"{id}","subject_id":"s1","image_path":"{id}.png","image_width":640,"image_height":480,"weight_kg":{weight},"height_m":{height}}}"#
        )
    }

    #[test]
    fn bmi_exact_values() {
        assert_eq!(compute_bmi(100.0, 2.0).unwrap(), 25.0);
        assert!((compute_bmi(81.0, 1.8).unwrap() - 25.0).abs() < 1e-12);
        let err = compute_bmi(70.0, 0.0).unwrap_err();
        assert_eq!(err.code(), "invalid_measurement");
        assert!(compute_bmi(-1.0, 1.7).is_err());
    }

    #[test]
    fn empty_manifest() {
        let m = parse_manifest("").unwrap();
        assert!(m.records.is_empty());
        assert!(m.rejects.is_empty());
    }

    #[test]
    fn three_good_lines() {
        let text = [line("a", 70.0, 1.7), line("b", 80.0, 1.8), line("c", 90.0, 1.9)].join("\n");
        let m = parse_manifest(&text).unwrap();
        assert_eq!(m.records.len(), 3);
        assert_eq!(m.rejects.len(), 0);
        assert_eq!(m.records[1].image_id, "b");
    }

    #[test]
    fn zero_height_rejected() {
        let text = [line("a", 70.0, 1.7), line("b", 70.0, 0.0)].join("\n");
        let m = parse_manifest(&text).unwrap();
        assert_eq!(m.records.len(), 1);
        assert_eq!(m.rejects.len(), 1);
        assert_eq!(m.rejects[0].reason, RejectReason::InvalidMeasurement);
        assert_eq!(m.rejects[0].line, 2);
        let out: Value = serde_json::from_str(&m.rejects[0].to_json_line()).unwrap();
        assert_eq!(out["reason"], "invalid_measurement");
        assert_eq!(out["image_id"], "b");
    }

    #[test]
    fn implausible_height_rejected() {
        let m = parse_manifest(&line("a", 70.0, 3.1)).unwrap();
        assert_eq!(m.rejects[0].reason, RejectReason::InvalidMeasurement);
    }

    #[test]
    fn duplicate_id_is_error() {
        let text = [line("a", 70.0, 1.7), line("a", 71.0, 1.7)].join("\n");
        let err = parse_manifest(&text).unwrap_err();
        assert_eq!(err.code(), "duplicate_image_id");
    }

    #[test]
    fn missing_subject_is_error() {
        let text = r#"{"image_id":"a","image_path":"a.png","image_width":1,"image_height":1,"weight_kg":70,"height_m":1.7}"#;
        let err = parse_manifest(text).unwrap_err();
        assert!(matches!(err, Error::MissingField { field: "subject_id", .. }));
        let text = r#"{"image_id":"a","subject_id":"s","image_path":"a.png","image_width":1,"image_height":1,"height_m":1.7}"#;
        assert!(matches!(
            parse_manifest(text).unwrap_err(),
            Error::MissingField { field: "weight_kg", .. }
        ));
    }

    #[test]
    fn garbage_line_rejected_not_dropped() {
        let text = format!("{}\nnot json\n[1,2]\n", line("a", 70.0, 1.7));
        let m = parse_manifest(&text).unwrap();
        assert_eq!(m.records.len(), 1);
        assert_eq!(m.rejects.len(), 2);
        assert!(m.rejects.iter().all(|r| r.reason == RejectReason::MalformedRecord));
        assert_eq!(m.total_lines(), 3);
    }

    #[test]
    fn keypoints_visibility_defaults_to_one() {
        let kps: Vec<String> = (0..17).map(|i| format!("[{i},{i}]")).collect();
        let text = format!(
            r#"{{"image_id":"a","subject_id":"s","image_path":"a.png","image_width":64,"image_height":64,"weight_kg":70,"height_m":1.7,"keypoints":[{}]}}"#,
            kps.join(",")
        );
        let m = parse_manifest(&text).unwrap();
        let k = m.records[0].keypoints.as_ref().unwrap();
        assert_eq!(k.get(KeypointName::RightAnkle), Keypoint::new(16.0, 16.0, 1.0));
        assert_eq!(k.mean_visibility(), 1.0);
    }

    #[test]
    fn wrong_keypoint_count_rejected() {
        let text = r#"{"image_id":"a","subject_id":"s","image_path":"a.png","image_width":64,"image_height":64,"weight_kg":70,"height_m":1.7,"keypoints":[[1,2,0.5]]}"#;
        let m = parse_manifest(text).unwrap();
        assert_eq!(m.rejects[0].reason, RejectReason::InvalidKeypoints);
    }

    #[test]
    fn bad_bbox_rejected() {
        let text = r#"{"image_id":"a","subject_id":"s","image_path":"a.png","image_width":64,"image_height":64,"weight_kg":70,"height_m":1.7,"bbox":{"x":0,"y":0,"w":0,"h":5,"confidence":0.9}}"#;
        let m = parse_manifest(text).unwrap();
        assert_eq!(m.rejects[0].reason, RejectReason::InvalidBbox);
        let text = r#"{"image_id":"a","subject_id":"s","image_path":"a.png","image_width":64,"image_height":64,"weight_kg":70,"height_m":1.7,"bbox":{"x":0,"y":0,"w":3,"h":5,"confidence":1.5}}"#;
        assert_eq!(parse_manifest(text).unwrap().rejects[0].reason, RejectReason::InvalidBbox);
    }

    #[test]
    fn clamp_box() {
        let b = BoundingBox::new(-10.0, 5.0, 700.0, 600.0, 0.9).unwrap();
        let c = b.clamp(640.0, 480.0).unwrap();
        assert_eq!((c.x, c.y, c.width, c.height), (0.0, 5.0, 640.0, 475.0));
        let outside = BoundingBox::new(700.0, 0.0, 10.0, 10.0, 0.9).unwrap();
        assert!(outside.clamp(640.0, 480.0).is_none());
    }
}
