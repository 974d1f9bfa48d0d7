//! Perspective crops: full body (person box), torso-up (shoulder/eye
//! heuristic) and face (head keypoints, or a supplied face box).
//!
//! Geometry works in continuous pixel coordinates. Conversion to an integer
//! pixel window floors the origin and ceils the far edge so annotated content
//! is never cut.

use std::fmt;
use std::path::Path;

use image::{DynamicImage, GenericImageView, ImageReader};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BoundingBox, ImageRecord, Keypoint, KeypointName, KeypointSet};

/// Minimum visibility for a keypoint to count as present.
pub const MIN_KEYPOINT_VISIBILITY: f64 = 0.3;
/// Torso margin added on each side, as a fraction of the base extent
/// (0.25 per side = 50% per dimension).
pub const TORSO_MARGIN_PER_SIDE: f64 = 0.25;
/// Face margin added on each side (0.30 per side = 60% per dimension).
pub const FACE_MARGIN_PER_SIDE: f64 = 0.30;
pub const MARGIN_CONVENTION: &str = "symmetric_per_side";
const MIN_HEAD_KEYPOINTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perspective {
    FullBody,
    TorsoUp,
    Face,
}

impl Perspective {
    pub const ALL: [Perspective; 3] = [Perspective::FullBody, Perspective::TorsoUp, Perspective::Face];

    pub fn as_str(self) -> &'static str {
        match self {
            Perspective::FullBody => "full_body",
            Perspective::TorsoUp => "torso_up",
            Perspective::Face => "face",
        }
    }

    /// Margin added per side by the heuristic for this perspective.
    pub fn margin_per_side(self) -> f64 {
        match self {
            Perspective::FullBody => 0.0,
            Perspective::TorsoUp => TORSO_MARGIN_PER_SIDE,
            Perspective::Face => FACE_MARGIN_PER_SIDE,
        }
    }
}

impl fmt::Display for Perspective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Perspective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Perspective::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown perspective {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
    pub perspective: Perspective,
}

/// Integer pixel window inside an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl CropRect {
    /// Floor the origin, ceil the far edge, and clip to the image.
    pub fn to_pixels(&self, image_width: u32, image_height: u32) -> Result<PixelRect> {
        let x0 = self.x.floor().max(0.0);
        let y0 = self.y.floor().max(0.0);
        let x1 = (self.x + self.width).ceil().min(image_width as f64);
        let y1 = (self.y + self.height).ceil().min(image_height as f64);
        if !(x1 > x0 && y1 > y0) {
            return Err(Error::DegenerateCrop);
        }
        Ok(PixelRect {
            x: x0 as u32,
            y: y0 as u32,
            width: (x1 - x0) as u32,
            height: (y1 - y0) as u32,
        })
    }

    pub fn right(&self) -> f64 {
        self.x + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.height
    }
}

/// Intersect the box [x0, x1] x [y0, y1] with the image frame.
fn clamp_rect(
    (x0, y0, x1, y1): (f64, f64, f64, f64),
    image_width: f64,
    image_height: f64,
    perspective: Perspective,
) -> Result<CropRect> {
    if !(image_width > 0.0 && image_height > 0.0) {
        return Err(Error::ZeroAreaImage {
            width: image_width,
            height: image_height,
        });
    }
    let cx0 = x0.max(0.0);
    let cy0 = y0.max(0.0);
    let cx1 = x1.min(image_width);
    let cy1 = y1.min(image_height);
    if !(cx1 > cx0 && cy1 > cy0) {
        return Err(Error::DegenerateCrop);
    }
    Ok(CropRect {
        x: cx0,
        y: cy0,
        width: inner_extent(cx0, cx1),
        height: inner_extent(cy0, cy1),
        perspective,
    })
}

/// `hi - lo`, shrunk by an ulp where needed so that `lo + extent <= hi`.
fn inner_extent(lo: f64, hi: f64) -> f64 {
    let mut extent = hi - lo;
    while lo + extent > hi {
        extent = extent.next_down();
    }
    extent
}

fn expand(
    (x0, y0, x1, y1): (f64, f64, f64, f64),
    per_side: f64,
) -> (f64, f64, f64, f64) {
    let mx = (x1 - x0) * per_side;
    let my = (y1 - y0) * per_side;
    (x0 - mx, y0 - my, x1 + mx, y1 + my)
}

fn visible(p: Keypoint) -> bool {
    p.visibility >= MIN_KEYPOINT_VISIBILITY
}

/// Torso-up crop. Base box: x between the shoulders, y from the highest eye
/// down to the lowest shoulder; then 25% of each base extent added per side.
pub fn torso_crop(keypoints: &KeypointSet, image_width: f64, image_height: f64) -> Result<CropRect> {
    use KeypointName::*;
    let ls = keypoints.get(LeftShoulder);
    let rs = keypoints.get(RightShoulder);
    let le = keypoints.get(LeftEye);
    let re = keypoints.get(RightEye);
    if ![ls, rs, le, re].into_iter().all(visible) {
        return Err(Error::InsufficientTorsoKeypoints);
    }
    let x0 = ls.x.min(rs.x);
    let x1 = ls.x.max(rs.x);
    let y0 = le.y.min(re.y);
    let y1 = ls.y.max(rs.y);
    if !(x1 > x0 && y1 > y0) {
        return Err(Error::DegenerateCrop);
    }
    clamp_rect(
        expand((x0, y0, x1, y1), TORSO_MARGIN_PER_SIDE),
        image_width,
        image_height,
        Perspective::TorsoUp,
    )
}

/// Face crop from the visible head keypoints (nose, eyes, ears), 30% of the
/// base extent added per side. Needs at least three visible head keypoints.
pub fn face_crop(keypoints: &KeypointSet, image_width: f64, image_height: f64) -> Result<CropRect> {
    let head: Vec<Keypoint> = KeypointName::HEAD
        .iter()
        .map(|&n| keypoints.get(n))
        .filter(|&p| visible(p))
        .collect();
    if head.len() < MIN_HEAD_KEYPOINTS {
        return Err(Error::InsufficientHeadKeypoints);
    }
    let x0 = head.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let x1 = head.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let y0 = head.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let y1 = head.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    if !(x1 > x0 && y1 > y0) {
        return Err(Error::DegenerateCrop);
    }
    clamp_rect(
        expand((x0, y0, x1, y1), FACE_MARGIN_PER_SIDE),
        image_width,
        image_height,
        Perspective::Face,
    )
}

/// Person box clipped to the frame.
pub fn full_body_crop(bbox: &BoundingBox, image_width: f64, image_height: f64) -> Result<CropRect> {
    clamp_rect(
        (bbox.x, bbox.y, bbox.x + bbox.width, bbox.y + bbox.height),
        image_width,
        image_height,
        Perspective::FullBody,
    )
}

/// The crop rectangle for `record` in the given perspective. A supplied
/// `face_bbox` takes precedence over the keypoint face heuristic.
pub fn crop_for(record: &ImageRecord, perspective: Perspective) -> Result<CropRect> {
    let (w, h) = (record.image_width as f64, record.image_height as f64);
    let missing = || Error::MissingAnnotation(record.image_id.clone());
    match perspective {
        Perspective::FullBody => full_body_crop(record.bbox.as_ref().ok_or_else(missing)?, w, h),
        Perspective::TorsoUp => torso_crop(record.keypoints.as_ref().ok_or_else(missing)?, w, h),
        Perspective::Face => match &record.face_bbox {
            Some(b) => full_body_crop(b, w, h).map(|r| CropRect {
                perspective: Perspective::Face,
                ..r
            }),
            None => face_crop(record.keypoints.as_ref().ok_or_else(missing)?, w, h),
        },
    }
}

pub fn decode_image(bytes: &[u8]) -> Result<DynamicImage> {
    ImageReader::new(std::io::Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::ImageDecode {
            path: "<memory>".into(),
            message: e.to_string(),
        })?
        .decode()
        .map_err(|e| Error::ImageDecode {
            path: "<memory>".into(),
            message: e.to_string(),
        })
}

pub fn open_image(path: &Path) -> Result<DynamicImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| match e {
        Error::ImageDecode { message, .. } => Error::ImageDecode {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Cut `rect` out of an in-memory image whose size must match the manifest.
pub fn crop_image(
    image: &DynamicImage,
    expected: (u32, u32),
    rect: &CropRect,
) -> Result<DynamicImage> {
    let (w, h) = image.dimensions();
    if (w, h) != expected {
        return Err(Error::DimensionMismatch {
            expected_width: expected.0,
            expected_height: expected.1,
            actual_width: w,
            actual_height: h,
        });
    }
    let px = rect.to_pixels(w, h)?;
    Ok(image.crop_imm(px.x, px.y, px.width, px.height))
}

/// Decode `source`, crop it and write the result to `output` (format from
/// the extension). Returns the pixel window used.
pub fn apply_crop(
    source: &Path,
    expected: (u32, u32),
    rect: &CropRect,
    output: &Path,
) -> Result<PixelRect> {
    let image = open_image(source)?;
    let cropped = crop_image(&image, expected, rect)?;
    if let Some(parent) = output.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    cropped.save(output).map_err(|e| Error::ImageEncode {
        path: output.to_path_buf(),
        message: e.to_string(),
    })?;
    rect.to_pixels(expected.0, expected.1)
}
