//! Curation and evaluation pipeline for image-based BMI estimation.
//!
//! Stages, in pipeline order:
//!
//! - [`ingest`]: JSON Lines manifests into validated [`ingest::ImageRecord`]s.
//! - [`person_filter`]: detection-confidence and person-area filters.
//! - [`posture`]: pose normalization, PCA, k-means with elbow selection and
//!   cluster keep/discard decisions.
//! - [`crop`]: full-body, torso-up and face crop rectangles and image crops.
//! - [`split`]: subject-disjoint greedy train/val/test assignment.
//! - [`eval`]: preprocessing, ONNX inference and MAPE/MAE metrics.
//! - [`pipeline`]: config, resumable stage orchestration and accounting.
//!
//! [`synthetic`] generates annotated corpora with planted anomalies.

pub mod crop;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod person_filter;
pub mod pipeline;
pub mod posture;
pub mod split;
pub mod synthetic;
pub mod verdict;

pub use error::{Error, Result};
