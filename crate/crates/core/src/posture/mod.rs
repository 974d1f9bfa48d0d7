//! Posture clustering filter.
//!
//! Keypoints are normalized by image size into a 34-value pose vector,
//! reduced with PCA to the requested explained-variance fraction, and
//! clustered with k-means for every k in a range; the elbow of the inertia
//! curve fixes k. Whole clusters are then kept or discarded, and every image
//! in a discarded cluster fails with `outlier_pose`.
//!
//! The fitted [`ClusterModel`] is a self-contained JSON artifact, so the
//! filter can be re-applied to new images without refitting.

pub mod decision;
pub mod eigen;
pub mod elbow;
pub mod kmeans;
pub mod pca;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use decision::{decide_clusters, ClusterDecision, ClusterInfo, ClusterPolicy, Decision};
pub use elbow::elbow_select;
pub use kmeans::{fit_kmeans, KmeansModel, KmeansParams};
pub use pca::{fit_pca, PcaModel};

use crate::error::{Error, Result};
use crate::ingest::{ImageRecord, NUM_KEYPOINTS};
use crate::verdict::{FilterReason, FilterVerdict};

pub const POSE_DIM: usize = 2 * NUM_KEYPOINTS;
pub const MODEL_FORMAT: &str = "bmi-curate/cluster-model";
pub const MODEL_VERSION: u32 = 1;

/// Keypoint coordinates normalized by image width and height, interleaved
/// as (x0, y0, x1, y1, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct PoseVector {
    pub values: [f64; POSE_DIM],
    /// Some keypoint lies outside the frame (component outside [0, 1]).
    pub out_of_frame: bool,
}

pub fn normalize_keypoints(record: &ImageRecord) -> Result<PoseVector> {
    let kps = record
        .keypoints
        .as_ref()
        .ok_or_else(|| Error::MissingAnnotation(record.image_id.clone()))?;
    if record.image_width == 0 || record.image_height == 0 {
        return Err(Error::ZeroAreaImage {
            width: record.image_width as f64,
            height: record.image_height as f64,
        });
    }
    let (w, h) = (record.image_width as f64, record.image_height as f64);
    let mut values = [0.0; POSE_DIM];
    for (i, p) in kps.points().iter().enumerate() {
        values[2 * i] = p.x / w;
        values[2 * i + 1] = p.y / h;
    }
    let out_of_frame = values.iter().any(|v| !(0.0..=1.0).contains(v));
    Ok(PoseVector {
        values,
        out_of_frame,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostureConfig {
    pub variance_threshold: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Images whose mean keypoint visibility falls below this are excluded
    /// from clustering with `missing_annotation`.
    pub min_mean_visibility: f64,
    /// Explicit keep/discard per cluster id; overrides the auto policy.
    pub decisions: Option<BTreeMap<usize, Decision>>,
    pub auto_discard_fraction: f64,
}

impl Default for PostureConfig {
    fn default() -> Self {
        let km = KmeansParams::default();
        Self {
            variance_threshold: pca::DEFAULT_VARIANCE_THRESHOLD,
            k_min: 1,
            k_max: 10,
            seed: 42,
            restarts: km.restarts,
            max_iter: km.max_iter,
            tol: km.tol,
            min_mean_visibility: 0.3,
            decisions: None,
            auto_discard_fraction: decision::DEFAULT_AUTO_DISCARD_FRACTION,
        }
    }
}

impl PostureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.variance_threshold > 0.0 && self.variance_threshold <= 1.0) {
            return Err(Error::InvalidThreshold(self.variance_threshold));
        }
        if self.k_min < 1 || self.k_min > self.k_max {
            return Err(Error::InvalidConfig(format!(
                "k range {}..={} is empty or starts below 1",
                self.k_min, self.k_max
            )));
        }
        if self.restarts < 1 || self.max_iter < 1 || !(self.tol >= 0.0) {
            return Err(Error::InvalidConfig("k-means restarts/max_iter/tol".into()));
        }
        if !(0.0..=1.0).contains(&self.min_mean_visibility)
            || !(0.0..=1.0).contains(&self.auto_discard_fraction)
        {
            return Err(Error::InvalidConfig(
                "min_mean_visibility and auto_discard_fraction must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn policy(&self) -> ClusterPolicy {
        ClusterPolicy {
            decisions: self.decisions.clone(),
            auto_discard_fraction: self.auto_discard_fraction,
        }
    }

    fn kmeans_params(&self) -> KmeansParams {
        KmeansParams {
            restarts: self.restarts,
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

/// Everything needed to re-apply the posture filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub format: String,
    pub version: u32,
    pub pca: PcaModel,
    pub kmeans: KmeansModel,
    pub decisions: ClusterDecision,
    /// `(k, inertia)` for every k evaluated.
    pub elbow_curve: Vec<(usize, f64)>,
    pub min_mean_visibility: f64,
    pub restarts: usize,
}

impl ClusterModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let model: ClusterModel =
            serde_json::from_str(text).map_err(|e| Error::malformed("cluster model", e))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cluster model serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::ingest::write_lines(path, [self.to_json()])
    }

    fn validate(&self) -> Result<()> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(Error::malformed("cluster model", "unknown format or version"));
        }
        self.pca.validate()?;
        self.kmeans.validate()?;
        if self.pca.n_features() != POSE_DIM {
            return Err(Error::malformed("cluster model", "PCA input width is not 34"));
        }
        if self.kmeans.dim() != self.pca.n_components() {
            return Err(Error::malformed("cluster model", "centroid width != PCA components"));
        }
        let ids_ok = self.decisions.clusters.len() == self.kmeans.k
            && self
                .decisions
                .clusters
                .iter()
                .enumerate()
                .all(|(i, c)| c.cluster == i);
        if !ids_ok {
            return Err(Error::malformed("cluster model", "decisions do not cover 0..k"));
        }
        if !(0.0..=1.0).contains(&self.min_mean_visibility) {
            return Err(Error::malformed("cluster model", "min_mean_visibility"));
        }
        Ok(())
    }

    /// Cluster index for a pose vector.
    pub fn assign(&self, pose: &PoseVector) -> Result<usize> {
        let projected = self.pca.transform_row(&pose.values)?;
        Ok(self.kmeans.predict(&projected))
    }

    /// Posture verdicts for `records` using the fitted model.
    pub fn apply(&self, records: &[ImageRecord]) -> Result<Vec<FilterVerdict>> {
        records
            .par_iter()
            .map(|r| match eligible_pose(r, self.min_mean_visibility) {
                None => Ok(FilterVerdict::with_reasons(
                    &r.image_id,
                    [FilterReason::MissingAnnotation],
                )),
                Some(pose) => {
                    let c = self.assign(&pose)?;
                    Ok(match self.decisions.decision(c) {
                        Some(Decision::Discard) => {
                            FilterVerdict::with_reasons(&r.image_id, [FilterReason::OutlierPose])
                        }
                        _ => FilterVerdict::pass(&r.image_id),
                    })
                }
            })
            .collect()
    }
}

fn eligible_pose(record: &ImageRecord, min_mean_visibility: f64) -> Option<PoseVector> {
    let kps = record.keypoints.as_ref()?;
    if kps.mean_visibility() < min_mean_visibility {
        return None;
    }
    normalize_keypoints(record).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub members: usize,
    pub fraction: f64,
    pub decision: Decision,
    /// Mean normalized pose (34 values).
    pub mean_pose: Vec<f64>,
    /// Per-keypoint (var_x, var_y) of the normalized coordinates.
    pub keypoint_variance: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPoint {
    pub image_id: String,
    pub cluster: usize,
    pub pc1: f64,
    /// Zero when PCA retained a single component.
    pub pc2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub seed: u64,
    pub variance_threshold: f64,
    pub retained_components: usize,
    pub explained_variance_ratio: Vec<f64>,
    pub selected_k: usize,
    pub elbow_curve: Vec<(usize, f64)>,
    pub clustered_images: usize,
    pub excluded_missing_annotation: usize,
    pub out_of_frame_images: usize,
    pub clusters: Vec<ClusterSummary>,
    pub projection: Vec<ProjectionPoint>,
}

/// Result of fitting the posture filter on a corpus.
#[derive(Debug, Clone)]
pub struct PostureFit {
    pub model: ClusterModel,
    pub verdicts: Vec<FilterVerdict>,
    pub report: ClusterReport,
}

/// Relabel clusters by descending size (ties: lexicographic centroid) so ids
/// are stable and cluster 0 is the largest.
fn canonical_order(model: &KmeansModel, assignments: &[usize]) -> Vec<usize> {
    let counts = decision::member_counts(model.k, assignments);
    let mut order: Vec<usize> = (0..model.k).collect();
    order.sort_by(|&a, &b| {
        counts[b].cmp(&counts[a]).then_with(|| {
            model.centroids[a]
                .iter()
                .zip(&model.centroids[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    // order[new] = old; invert to old -> new
    let mut relabel = vec![0; model.k];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    relabel
}

/// Fit PCA, sweep k, select by elbow, and judge clusters.
pub fn fit_posture(records: &[ImageRecord], cfg: &PostureConfig) -> Result<PostureFit> {
    cfg.validate()?;
    let poses: Vec<Option<PoseVector>> = records
        .par_iter()
        .map(|r| eligible_pose(r, cfg.min_mean_visibility))
        .collect();
    let eligible: Vec<(usize, &PoseVector)> = poses
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.as_ref().map(|p| (i, p)))
        .collect();
    let n = eligible.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let flat: Vec<f64> = eligible.iter().flat_map(|(_, p)| p.values).collect();
    let data = Array2::from_shape_vec((n, POSE_DIM), flat).expect("n x 34");

    let pca = fit_pca(data.view(), cfg.variance_threshold)?;
    let projected = pca.transform(data.view())?;

    let params = cfg.kmeans_params();
    let k_max = cfg.k_max.min(n);
    let k_min = cfg.k_min.min(k_max);
    let fits = (k_min..=k_max)
        .map(|k| kmeans::fit_kmeans_with(projected.view(), k, cfg.seed, &params))
        .collect::<Result<Vec<_>>>()?;
    let elbow_curve: Vec<(usize, f64)> = fits.iter().map(|(m, _)| (m.k, m.inertia)).collect();
    let selected_k = if k_min == k_max {
        k_min
    } else {
        elbow_select(&elbow_curve)?
    };
    let (mut km, raw_assign) = fits
        .into_iter()
        .find(|(m, _)| m.k == selected_k)
        .expect("selected k was fitted");

    let relabel = canonical_order(&km, &raw_assign);
    let mut centroids = vec![Vec::new(); km.k];
    for (old, c) in km.centroids.drain(..).enumerate() {
        centroids[relabel[old]] = c;
    }
    km.centroids = centroids;
    let assignments: Vec<usize> = raw_assign.iter().map(|&a| relabel[a]).collect();

    let decisions = decide_clusters(km.k, &assignments, &cfg.policy())?;

    let mut verdicts: Vec<FilterVerdict> = records
        .iter()
        .map(|r| FilterVerdict::with_reasons(&r.image_id, [FilterReason::MissingAnnotation]))
        .collect();
    for (&(idx, _), &c) in eligible.iter().zip(&assignments) {
        verdicts[idx] = match decisions.decision(c) {
            Some(Decision::Discard) => {
                FilterVerdict::with_reasons(&records[idx].image_id, [FilterReason::OutlierPose])
            }
            _ => FilterVerdict::pass(&records[idx].image_id),
        };
    }

    let clusters = (0..km.k)
        .map(|c| {
            let members: Vec<&PoseVector> = eligible
                .iter()
                .zip(&assignments)
                .filter(|(_, &a)| a == c)
                .map(|((_, p), _)| *p)
                .collect();
            summarize_cluster(c, &members, n, decisions.clusters[c].decision)
        })
        .collect();
    let projection = eligible
        .iter()
        .zip(&assignments)
        .zip(projected.rows())
        .map(|(((idx, _), &c), row)| ProjectionPoint {
            image_id: records[*idx].image_id.clone(),
            cluster: c,
            pc1: row[0],
            pc2: if row.len() > 1 { row[1] } else { 0.0 },
        })
        .collect();

    let report = ClusterReport {
        seed: cfg.seed,
        variance_threshold: cfg.variance_threshold,
        retained_components: pca.n_components(),
        explained_variance_ratio: pca.explained_variance_ratio.clone(),
        selected_k,
        elbow_curve: elbow_curve.clone(),
        clustered_images: n,
        excluded_missing_annotation: records.len() - n,
        out_of_frame_images: eligible.iter().filter(|(_, p)| p.out_of_frame).count(),
        clusters,
        projection,
    };
    let model = ClusterModel {
        format: MODEL_FORMAT.to_owned(),
        version: MODEL_VERSION,
        pca,
        kmeans: km,
        decisions,
        elbow_curve,
        min_mean_visibility: cfg.min_mean_visibility,
        restarts: cfg.restarts,
    };
    Ok(PostureFit {
        model,
        verdicts,
        report,
    })
}

fn summarize_cluster(
    cluster: usize,
    members: &[&PoseVector],
    total: usize,
    decision: Decision,
) -> ClusterSummary {
    let m = members.len();
    let mut mean = vec![0.0; POSE_DIM];
    for p in members {
        for (acc, v) in mean.iter_mut().zip(p.values) {
            *acc += v;
        }
    }
    if m > 0 {
        mean.iter_mut().for_each(|v| *v /= m as f64);
    }
    let mut var = vec![[0.0; 2]; NUM_KEYPOINTS];
    if m > 1 {
        for p in members {
            for (k, slot) in var.iter_mut().enumerate() {
                slot[0] += (p.values[2 * k] - mean[2 * k]).powi(2);
                slot[1] += (p.values[2 * k + 1] - mean[2 * k + 1]).powi(2);
            }
        }
        for slot in var.iter_mut() {
            slot[0] /= (m - 1) as f64;
            slot[1] /= (m - 1) as f64;
        }
    }
    ClusterSummary {
        cluster,
        members: m,
        fraction: m as f64 / total.max(1) as f64,
        decision,
        mean_pose: mean,
        keypoint_variance: var,
    }
}
