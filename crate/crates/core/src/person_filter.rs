//! Person-detection filters: detection confidence and person-to-image area ratio.
//!
//! Both criteria are evaluated independently for every record, so one image
//! may collect several reasons.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BoundingBox, ImageRecord};
use crate::verdict::{FilterReason, FilterVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PersonFilterConfig {
    pub min_confidence: f64,
    pub min_area_ratio: f64,
}

impl Default for PersonFilterConfig {
    fn default() -> Self {
        Self {
            min_confidence: 0.9,
            min_area_ratio: 0.10,
        }
    }
}

impl PersonFilterConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("min_confidence", self.min_confidence),
            ("min_area_ratio", self.min_area_ratio),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Fraction of the image covered by `bbox` after clamping it to the frame.
pub fn area_ratio(bbox: &BoundingBox, image_width: f64, image_height: f64) -> Result<f64> {
    if !(image_width > 0.0 && image_height > 0.0) {
        return Err(Error::ZeroAreaImage {
            width: image_width,
            height: image_height,
        });
    }
    Ok(bbox
        .clamp(image_width, image_height)
        .map_or(0.0, |b| b.area() / (image_width * image_height)))
}

pub fn person_verdict(record: &ImageRecord, cfg: &PersonFilterConfig) -> FilterVerdict {
    let Some(bbox) = &record.bbox else {
        return FilterVerdict::with_reasons(&record.image_id, [FilterReason::MissingAnnotation]);
    };
    let mut reasons = Vec::new();
    if bbox.confidence < cfg.min_confidence {
        reasons.push(FilterReason::LowConfidence);
    }
    // Ingest guarantees positive dimensions.
    let ratio = area_ratio(bbox, record.image_width as f64, record.image_height as f64)
        .unwrap_or(0.0);
    if ratio < cfg.min_area_ratio {
        reasons.push(FilterReason::SmallPerson);
    }
    FilterVerdict::with_reasons(&record.image_id, reasons)
}

/// One verdict per record, in input order.
pub fn apply_person_filter(records: &[ImageRecord], cfg: &PersonFilterConfig) -> Vec<FilterVerdict> {
    records.par_iter().map(|r| person_verdict(r, cfg)).collect()
}
