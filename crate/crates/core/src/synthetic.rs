//! Synthetic annotated corpus with planted anomalies, for tests and demos.
//!
//! Subjects stand facing the camera in one of two normal poses (arms down or
//! arms raised). A fixed number of images are then corrupted: close-up shots
//! whose lower body falls outside the frame, far-away people with tiny boxes,
//! and boxes with low detector confidence. The planted sets are returned
//! alongside the records so a test can score the filters against them.

use std::collections::BTreeSet;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BoundingBox, ImageRecord, Keypoint, KeypointSet, Measurement, NUM_KEYPOINTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub subjects: usize,
    pub images_per_subject: usize,
    pub outlier_pose: usize,
    pub small_person: usize,
    pub low_confidence: usize,
    /// How many low-confidence images are drawn from the small-person set.
    pub low_confidence_overlap: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 2024,
            subjects: 250,
            images_per_subject: 4,
            outlier_pose: 30,
            small_person: 50,
            low_confidence: 20,
            low_confidence_overlap: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub outlier_pose: BTreeSet<String>,
    pub small_person: BTreeSet<String>,
    pub low_confidence: BTreeSet<String>,
}

impl PlantedTruth {
    pub fn all(&self) -> BTreeSet<String> {
        self.outlier_pose
            .iter()
            .chain(&self.small_person)
            .chain(&self.low_confidence)
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub spec: CorpusSpec,
    pub planted: PlantedTruth,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub spec: CorpusSpec,
    pub records: Vec<ImageRecord>,
    pub planted: PlantedTruth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shot {
    ArmsDown,
    ArmsUp,
    CloseUp,
}

// Keypoints in person-relative units: u across (0.5 = body centre, scaled
// by body width), v down from the top of the head (scaled by body height).
const TEMPLATE_DOWN: [(f64, f64); NUM_KEYPOINTS] = [
    (0.50, 0.07),
    (0.55, 0.055),
    (0.45, 0.055),
    (0.60, 0.065),
    (0.40, 0.065),
    (0.72, 0.19),
    (0.28, 0.19),
    (0.80, 0.36),
    (0.20, 0.36),
    (0.82, 0.51),
    (0.18, 0.51),
    (0.62, 0.53),
    (0.38, 0.53),
    (0.61, 0.75),
    (0.39, 0.75),
    (0.60, 0.97),
    (0.40, 0.97),
];

fn template(shot: Shot) -> [(f64, f64); NUM_KEYPOINTS] {
    let mut t = TEMPLATE_DOWN;
    if shot == Shot::ArmsUp {
        t[7] = (0.86, 0.10);
        t[8] = (0.14, 0.10);
        t[9] = (0.90, 0.0);
        t[10] = (0.10, 0.0);
    }
    t
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    fn u(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    /// Place a person of pixel height `h` with top-left body corner (x, y).
    fn person(&mut self, shot: Shot, x: f64, y: f64, h: f64, aspect: f64, size: (u32, u32)) -> KeypointSet {
        let w = aspect * h;
        let jitter = 0.012;
        let (iw, ih) = (size.0 as f64, size.1 as f64);
        let mut pts = [Keypoint::new(0.0, 0.0, 1.0); NUM_KEYPOINTS];
        for (p, (u, v)) in pts.iter_mut().zip(template(shot)) {
            let px = x + (u + self.u(-jitter, jitter)) * w;
            let py = y + (v + self.u(-jitter, jitter)) * h;
            let inside = (0.0..iw).contains(&px) && (0.0..ih).contains(&py);
            let vis = if inside { round2(self.u(0.8, 1.0)) } else { 0.5 };
            *p = Keypoint::new(round2(px), round2(py), vis);
        }
        KeypointSet::new(pts).expect("finite keypoints")
    }
}

pub fn generate(spec: &CorpusSpec) -> Result<SyntheticCorpus> {
    let n = spec.subjects * spec.images_per_subject;
    let planted_total = spec.outlier_pose + spec.small_person + spec.low_confidence - spec.low_confidence_overlap;
    if spec.low_confidence_overlap > spec.low_confidence.min(spec.small_person) || planted_total > n {
        return Err(Error::InvalidConfig("planted anomaly counts do not fit the corpus".into()));
    }
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut g.rng);
    let (outliers, rest) = order.split_at(spec.outlier_pose);
    let (small, rest) = rest.split_at(spec.small_person);
    let low_only = &rest[..spec.low_confidence - spec.low_confidence_overlap];
    let outliers: BTreeSet<usize> = outliers.iter().copied().collect();
    let small: BTreeSet<usize> = small.iter().copied().collect();
    let low: BTreeSet<usize> = low_only
        .iter()
        .chain(small.iter().take(spec.low_confidence_overlap))
        .copied()
        .collect();

    let mut records = Vec::with_capacity(n);
    let mut planted = PlantedTruth::default();
    for s in 0..spec.subjects {
        let subject_id = format!("subj_{s:04}");
        let height_m = round2(g.u(1.50, 1.95));
        let bmi = g.u(17.5, 40.0);
        let weight_kg = round2(bmi * height_m * height_m);
        let measurement = Measurement::new(weight_kg, height_m)?;
        for j in 0..spec.images_per_subject {
            let idx = s * spec.images_per_subject + j;
            let image_id = format!("img_{idx:05}");
            let iw = [224u32, 240, 256][g.rng.random_range(0..3)];
            let ih = iw * 4 / 3;
            let (fw, fh) = (iw as f64, ih as f64);
            let aspect = g.u(0.36, 0.48);
            let mut confidence = round2(g.u(0.92, 1.0));

            let (bbox, keypoints) = if outliers.contains(&idx) {
                // Close-up: body height well beyond the frame, head near the top.
                let h = g.u(2.0, 2.6) * fh;
                let x = fw / 2.0 - aspect * h / 2.0 + g.u(-0.05, 0.05) * fw;
                let y = g.u(0.02, 0.08) * fh;
                let kps = g.person(Shot::CloseUp, x, y, h, aspect, (iw, ih));
                let b = BoundingBox::new(0.0, round2(y), fw, round2(fh - y), confidence)?;
                planted.outlier_pose.insert(image_id.clone());
                (b, kps)
            } else {
                let shot = if g.u(0.0, 1.0) < 0.53 { Shot::ArmsDown } else { Shot::ArmsUp };
                let h = if small.contains(&idx) {
                    let ratio = g.u(0.02, 0.06);
                    (ratio * fw * fh / aspect).sqrt()
                } else {
                    g.u(0.72, 0.92) * fh
                };
                let w = aspect * h;
                let x = g.u(0.02 * fw, fw - w - 0.02 * fw);
                let y = g.u(0.01 * fh, fh - h - 0.01 * fh);
                let kps = g.person(shot, x, y, h, aspect, (iw, ih));
                if small.contains(&idx) {
                    planted.small_person.insert(image_id.clone());
                }
                if low.contains(&idx) {
                    confidence = round2(g.u(0.30, 0.85));
                    planted.low_confidence.insert(image_id.clone());
                }
                let b = BoundingBox::new(round2(x), round2(y), round2(w), round2(h), confidence)?;
                (b, kps)
            };
            records.push(ImageRecord {
                image_id: image_id.clone(),
                subject_id: subject_id.clone(),
                image_path: format!("images/{image_id}.png"),
                image_width: iw,
                image_height: ih,
                bbox: Some(bbox),
                keypoints: Some(keypoints),
                face_bbox: None,
                measurement: measurement.clone(),
            });
        }
    }
    Ok(SyntheticCorpus {
        spec: spec.clone(),
        records,
        planted,
    })
}

/// A flat-shaded picture consistent with the record's box and keypoints.
pub fn render(record: &ImageRecord) -> RgbImage {
    let (w, h) = (record.image_width, record.image_height);
    let seed = record.image_id.bytes().fold(7u32, |a, b| a.wrapping_mul(31).wrapping_add(b as u32));
    let bg = Rgb([60 + (seed % 80) as u8, 90 + (seed / 7 % 60) as u8, 120 + (seed / 11 % 80) as u8]);
    let mut img = RgbImage::from_pixel(w, h, bg);
    if let Some(b) = record.bbox.and_then(|b| b.clamp(w as f64, h as f64)) {
        let (x0, y0) = (b.x as u32, b.y as u32);
        let x1 = ((b.x + b.width).ceil() as u32).min(w);
        let y1 = ((b.y + b.height).ceil() as u32).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                let shade = 150 + ((x + 2 * y) % 40) as u8;
                img.put_pixel(x, y, Rgb([shade, shade / 2 + 40, 70]));
            }
        }
    }
    if let Some(k) = &record.keypoints {
        for p in k.points() {
            let (cx, cy) = (p.x.round() as i64, p.y.round() as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (x, y) = (cx + dx, cy + dy);
                    if (0..w as i64).contains(&x) && (0..h as i64).contains(&y) {
                        img.put_pixel(x as u32, y as u32, Rgb([250, 250, 250]));
                    }
                }
            }
        }
    }
    img
}

/// Render every record to `<root>/<image_path>`.
pub fn write_images(records: &[ImageRecord], root: &Path) -> Result<()> {
    use rayon::prelude::*;
    records.par_iter().try_for_each(|r| {
        let path = r.resolve_image_path(root);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        render(r).save(&path).map_err(|e| Error::ImageEncode {
            path: path.clone(),
            message: e.to_string(),
        })
    })
}
