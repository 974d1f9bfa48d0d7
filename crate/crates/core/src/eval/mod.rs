//! Model evaluation: preprocessing, ONNX inference and error metrics.

pub mod metrics;
pub mod model;
pub mod preprocess;

use rayon::prelude::*;

pub use metrics::{compute_metrics, compute_metrics_parallel, MetricsReport, PredictionRecord};
pub use model::BmiModel;
pub use preprocess::{preprocess_image, preprocess_path, ImageTensor, PreprocessSpec};

use crate::error::Result;
use crate::ingest::ImageRecord;

/// One image to score: the record plus the file holding its (cropped) pixels.
#[derive(Debug, Clone)]
pub struct EvalItem<'a> {
    pub record: &'a ImageRecord,
    pub image: std::path::PathBuf,
    pub split: String,
}

/// Score every item in parallel with a shared model. Output order matches
/// the input order; the first failure aborts.
pub fn predict_all(model: &BmiModel, spec: &PreprocessSpec, items: &[EvalItem<'_>]) -> Result<Vec<PredictionRecord>> {
    items
        .par_iter()
        .map(|item| {
            let tensor = preprocess_path(&item.image, spec)?;
            let predicted_bmi = model.predict(&tensor)?;
            let m = &item.record.measurement;
            Ok(PredictionRecord {
                image_id: item.record.image_id.clone(),
                subject_id: item.record.subject_id.clone(),
                split: item.split.clone(),
                predicted_bmi,
                true_bmi: m.bmi(),
                height: m.height_m(),
            })
        })
        .collect()
}
