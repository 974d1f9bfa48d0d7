//! Mean-centred PCA via eigendecomposition of the sample covariance matrix.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::eigen::symmetric_eigen;
use crate::error::{Error, Result};

pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.95;

/// Slack on the cumulative-variance comparison so that e.g. a threshold of
/// 1.0 is reachable despite rounding in the ratio sum.
const CUMULATIVE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Retained components, one orthonormal row each (p x d).
    pub components: Vec<Vec<f64>>,
    /// Covariance eigenvalues of the retained components.
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub variance_threshold: f64,
}

impl PcaModel {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn components_matrix(&self) -> Array2<f64> {
        let d = self.n_features();
        let flat: Vec<f64> = self.components.iter().flatten().copied().collect();
        Array2::from_shape_vec((self.n_components(), d), flat).expect("rectangular components")
    }

    /// Project rows of `data` (n x d) onto the retained components (n x p).
    pub fn transform(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        if data.ncols() != self.n_features() {
            return Err(Error::ShapeMismatch {
                expected: vec![data.nrows(), self.n_features()],
                actual: data.shape().to_vec(),
            });
        }
        let mean = ArrayView1::from(&self.mean);
        let centered = &data - &mean.insert_axis(Axis(0));
        Ok(centered.dot(&self.components_matrix().t()))
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, row.len()), row)
            .map_err(|e| Error::malformed("pose vector", e))?;
        Ok(self.transform(view)?.row(0).to_vec())
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let d = self.n_features();
        let p = self.n_components();
        let bad = |m: &str| Err(Error::malformed("pca model", m));
        if d == 0 || p == 0 || p > d {
            return bad("component count out of range");
        }
        if self.components.iter().any(|r| r.len() != d) {
            return bad("component row length mismatch");
        }
        if self.eigenvalues.len() != p || self.explained_variance_ratio.len() != p {
            return bad("eigenvalue count mismatch");
        }
        let all_finite = self
            .mean
            .iter()
            .chain(self.components.iter().flatten())
            .chain(&self.eigenvalues)
            .chain(&self.explained_variance_ratio)
            .all(|v| v.is_finite());
        if !all_finite {
            return bad("non-finite value");
        }
        if !(self.variance_threshold > 0.0 && self.variance_threshold <= 1.0) {
            return Err(Error::InvalidThreshold(self.variance_threshold));
        }
        Ok(())
    }
}

/// Fit PCA on the rows of `data`, keeping the fewest leading components
/// whose cumulative explained variance reaches `variance_threshold`.
///
/// Components are sign-normalized so their largest-magnitude entry is
/// positive.
pub fn fit_pca(data: ArrayView2<f64>, variance_threshold: f64) -> Result<PcaModel> {
    let (n, d) = data.dim();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    if !(variance_threshold > 0.0 && variance_threshold <= 1.0) {
        return Err(Error::InvalidThreshold(variance_threshold));
    }
    if d == 0 || data.iter().any(|v| !v.is_finite()) {
        return Err(Error::malformed("pca input", "empty or non-finite data"));
    }

    let mean: Array1<f64> = data.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &data - &mean.view().insert_axis(Axis(0));
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);

    let (mut values, vectors) = symmetric_eigen(&cov);
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }
    let total: f64 = values.iter().sum();
    let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if total <= 1e-24 * (1.0 + scale * scale) {
        return Err(Error::ZeroVariance);
    }

    let ratios: Vec<f64> = values.iter().map(|v| v / total).collect();
    let mut cumulative = 0.0;
    let mut keep = d;
    for (i, r) in ratios.iter().enumerate() {
        cumulative += r;
        if cumulative >= variance_threshold - CUMULATIVE_SLACK {
            keep = i + 1;
            break;
        }
    }

    let components = (0..keep)
        .map(|c| {
            let mut row = vectors.column(c).to_vec();
            let pivot = row
                .iter()
                .copied()
                .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
            if pivot < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
            row
        })
        .collect();

    Ok(PcaModel {
        mean: mean.to_vec(),
        components,
        eigenvalues: values[..keep].to_vec(),
        explained_variance_ratio: ratios[..keep].to_vec(),
        variance_threshold,
    })
}
