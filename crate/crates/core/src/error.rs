use std::path::PathBuf;

/// Errors produced by the curation pipeline.
///
/// Every variant maps onto a stable snake_case reason code (see [`Error::code`])
/// which is what gets written into reject lists, stage sidecars and CLI output.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: duplicate image_id {image_id:?}")]
    DuplicateImageId { line: usize, image_id: String },

    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },

    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),

    #[error("image has zero area ({width}x{height})")]
    ZeroAreaImage { width: f64, height: f64 },

    #[error("image {0:?} lacks the annotation this step needs")]
    MissingAnnotation(String),

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("input has zero total variance")]
    ZeroVariance,

    #[error("variance threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),

    #[error("invalid cluster count k={k} for {n} samples")]
    InvalidK { k: usize, n: usize },

    #[error("elbow input keys must be consecutive increasing integers")]
    NonMonotoneK,

    #[error("cluster decision references unknown cluster {0}")]
    UnknownCluster(usize),

    #[error("crop rectangle is degenerate")]
    DegenerateCrop,

    #[error("shoulders and eyes must all be visible for a torso crop")]
    InsufficientTorsoKeypoints,

    #[error("fewer than 3 visible head keypoints")]
    InsufficientHeadKeypoints,

    #[error("cannot decode image {path}: {message}")]
    ImageDecode { path: PathBuf, message: String },

    #[error("cannot encode image {path}: {message}")]
    ImageEncode { path: PathBuf, message: String },

    #[error("image is {actual_width}x{actual_height}, manifest says {expected_width}x{expected_height}")]
    DimensionMismatch {
        expected_width: u32,
        expected_height: u32,
        actual_width: u32,
        actual_height: u32,
    },

    #[error("input is empty")]
    EmptyInput,

    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),

    #[error("subject {0:?} has no split assignment")]
    UncoveredSubject(String),

    #[error("subjects assigned to more than one split: {0:?}")]
    SubjectOverlap(Vec<String>),

    #[error("model artifact is unusable: {0}")]
    CorruptModel(String),

    #[error("input shape {actual:?} does not match expected {expected:?}")]
    ShapeMismatch { expected: Vec<usize>, actual: Vec<usize> },

    #[error("inference failed: {0}")]
    Inference(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed {kind}: {message}")]
    Malformed { kind: &'static str, message: String },

    #[error("duplicate verdict for image {0:?}")]
    DuplicateVerdict(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable machine-readable reason code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io_error",
            Error::DuplicateImageId { .. } => "duplicate_image_id",
            Error::MissingField { .. } => "missing_field",
            Error::InvalidMeasurement(_) => "invalid_measurement",
            Error::ZeroAreaImage { .. } => "zero_area_image",
            Error::MissingAnnotation(_) => "missing_annotation",
            Error::InsufficientSamples { .. } => "insufficient_samples",
            Error::ZeroVariance => "zero_variance",
            Error::InvalidThreshold(_) => "invalid_threshold",
            Error::InvalidK { .. } => "invalid_k",
            Error::NonMonotoneK => "non_monotone_k",
            Error::UnknownCluster(_) => "unknown_cluster",
            Error::DegenerateCrop => "degenerate_crop",
            Error::InsufficientTorsoKeypoints => "insufficient_torso_keypoints",
            Error::InsufficientHeadKeypoints => "insufficient_head_keypoints",
            Error::ImageDecode { .. } => "undecodable_image",
            Error::ImageEncode { .. } => "image_encode_failed",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::EmptyInput => "empty_input",
            Error::InvalidRatios(_) => "invalid_ratios",
            Error::UncoveredSubject(_) => "uncovered_subject",
            Error::SubjectOverlap(_) => "subject_overlap",
            Error::CorruptModel(_) => "corrupt_model",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::Inference(_) => "inference_failed",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Malformed { .. } => "malformed_input",
            Error::DuplicateVerdict(_) => "duplicate_verdict",
            Error::Stage { source, .. } => source.code(),
        }
    }

    /// True for errors caused by bad inputs or configuration rather than a
    /// failure while a stage was executing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_) | Error::InvalidRatios(_) | Error::InvalidThreshold(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(kind: &'static str, message: impl ToString) -> Self {
        Error::Malformed {
            kind,
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
