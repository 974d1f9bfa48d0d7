//! Lloyd's k-means with k-means++ seeding and best-of-restarts selection.
//!
//! Restart `r` draws from `ChaCha8Rng::seed_from_u64(seed + r)`, so running
//! restarts in parallel selects the same model as running them serially.

use ndarray::{Array2, ArrayView2};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmeansParams {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once the relative inertia improvement drops below this.
    pub tol: f64,
}

impl Default for KmeansParams {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 300,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansModel {
    pub k: usize,
    /// k x p, one centroid per row.
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub seed: u64,
}

impl KmeansModel {
    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Index of the nearest centroid; ties go to the lower index.
    pub fn predict(&self, point: &[f64]) -> usize {
        nearest(self.centroids.iter().map(Vec::as_slice), point).0
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let p = self.dim();
        if self.k == 0 || self.centroids.len() != self.k || p == 0 {
            return Err(Error::malformed("kmeans model", "centroid count mismatch"));
        }
        if self.centroids.iter().any(|c| c.len() != p || c.iter().any(|v| !v.is_finite())) {
            return Err(Error::malformed("kmeans model", "ragged or non-finite centroids"));
        }
        if !(self.inertia >= 0.0 && self.inertia.is_finite()) {
            return Err(Error::malformed("kmeans model", "invalid inertia"));
        }
        Ok(())
    }
}

/// A single Lloyd run.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after every assignment step; non-increasing.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest<'a>(centroids: impl Iterator<Item = &'a [f64]>, point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.enumerate() {
        let d = sq_dist(c, point);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn rows(data: &ArrayView2<f64>) -> Vec<Vec<f64>> {
    data.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// k-means++ seeding: first centre uniform, then proportional to squared
/// distance from the nearest chosen centre.
pub fn kmeans_plus_plus(data: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (n, p) = data.dim();
    let points = rows(&data);
    let mut centers = Array2::<f64>::zeros((k, p));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&data.row(first));
    let mut d2: Vec<f64> = points.iter().map(|x| sq_dist(x, &points[first])).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            sample_d2(&d2, total, rng)
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&data.row(pick));
        for (w, x) in d2.iter_mut().zip(&points) {
            *w = w.min(sq_dist(x, &points[pick]));
        }
    }
    centers
}

/// Index drawn with probability proportional to `weights` (which sum to
/// `total` > 0).
fn sample_d2(weights: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let mut target = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 && target < *w {
            return i;
        }
        target -= w;
    }
    // Rounding ran off the end: take the last positive weight.
    weights.iter().rposition(|w| *w > 0.0).expect("total > 0")
}

fn assign(points: &[Vec<f64>], centroids: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    let cents = rows(&centroids.view());
    points
        .iter()
        .map(|x| nearest(cents.iter().map(Vec::as_slice), x))
        .unzip()
}

/// Lloyd iterations from the given initial centroids.
///
/// An emptied cluster is re-seeded at the point farthest from its assigned
/// centroid, which can only lower the objective.
pub fn lloyd(data: ArrayView2<f64>, init: Array2<f64>, max_iter: usize, tol: f64) -> LloydRun {
    let (n, p) = data.dim();
    let k = init.nrows();
    let mut centroids = init;
    let mut trace = Vec::new();
    let mut prev: Option<(Vec<usize>, f64)> = None;
    let mut iterations = 0;
    let points = rows(&data);
    let (mut assignments, mut dists) = assign(&points, &centroids);

    loop {
        let inertia: f64 = dists.iter().sum();
        trace.push(inertia);
        iterations += 1;
        if let Some((prev_assign, prev_inertia)) = &prev {
            let improvement = prev_inertia - inertia;
            if *prev_assign == assignments
                || *prev_inertia == 0.0
                || improvement <= tol * prev_inertia
            {
                break;
            }
        }
        if iterations >= max_iter {
            break;
        }

        let mut sums = Array2::<f64>::zeros((k, p));
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            let mut s = sums.row_mut(a);
            s += &data.row(i);
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let mean = &sums.row(c) / counts[c] as f64;
                centroids.row_mut(c).assign(&mean);
            } else {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
                if let Some(far) = far {
                    taken[far] = true;
                    centroids.row_mut(c).assign(&data.row(far));
                }
            }
        }
        prev = Some((assignments, inertia));
        (assignments, dists) = assign(&points, &centroids);
    }

    let inertia = *trace.last().expect("at least one iteration");
    LloydRun {
        centroids,
        assignments,
        inertia,
        trace,
        iterations,
    }
}

/// One seeded restart.
pub fn kmeans_run(data: ArrayView2<f64>, k: usize, seed: u64, params: &KmeansParams) -> LloydRun {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = kmeans_plus_plus(data, k, &mut rng);
    lloyd(data, init, params.max_iter, params.tol)
}

/// Best of `params.restarts` seeded runs by inertia (ties: lowest restart).
pub fn fit_kmeans_with(
    data: ArrayView2<f64>,
    k: usize,
    seed: u64,
    params: &KmeansParams,
) -> Result<(KmeansModel, Vec<usize>)> {
    let n = data.nrows();
    if k < 1 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    if data.ncols() == 0 || data.iter().any(|v| !v.is_finite()) {
        return Err(Error::malformed("kmeans input", "empty or non-finite data"));
    }
    let restarts = params.restarts.max(1);
    let runs: Vec<LloydRun> = (0..restarts as u64)
        .into_par_iter()
        .map(|r| kmeans_run(data, k, seed.wrapping_add(r), params))
        .collect();
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.inertia.total_cmp(&b.inertia).then(ia.cmp(ib)))
        .map(|(_, r)| r)
        .expect("restarts >= 1");
    let model = KmeansModel {
        k,
        centroids: best.centroids.rows().into_iter().map(|r| r.to_vec()).collect(),
        inertia: best.inertia,
        seed,
    };
    Ok((model, best.assignments))
}

pub fn fit_kmeans(
    data: ArrayView2<f64>,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<KmeansModel> {
    let params = KmeansParams {
        restarts,
        ..KmeansParams::default()
    };
    fit_kmeans_with(data, k, seed, &params).map(|(m, _)| m)
}

/// Sum of squared distances from each row to its nearest centroid.
pub fn inertia(data: ArrayView2<f64>, centroids: &[Vec<f64>]) -> f64 {
    rows(&data)
        .iter()
        .map(|x| nearest(centroids.iter().map(Vec::as_slice), x).1)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn k1_is_mean() {
        let data = array![[0.0, 0.0], [2.0, 0.0], [1.0, 3.0], [5.0, 1.0]];
        let m = fit_kmeans(data.view(), 1, 42, 3).unwrap();
        assert!((m.centroids[0][0] - 2.0).abs() < 1e-12);
        assert!((m.centroids[0][1] - 1.0).abs() < 1e-12);
        // squared deviations: x: 4+0+1+9, y: 1+1+4+0
        assert!((m.inertia - 20.0).abs() < 1e-12);
    }

    #[test]
    fn separated_blobs_partition_exactly() {
        let mut rows = Vec::new();
        for i in 0..20 {
            let t = i as f64 * 0.05;
            rows.push([t.sin() * 0.5, t.cos() * 0.5]);
            rows.push([100.0 + t.cos() * 0.5, 100.0 + t.sin() * 0.5]);
        }
        let data = Array2::from_shape_vec((40, 2), rows.concat()).unwrap();
        let (m, a) = fit_kmeans_with(data.view(), 2, 7, &KmeansParams::default()).unwrap();
        assert_eq!(m.k, 2);
        for i in (0..40).step_by(2) {
            assert_eq!(a[i], a[0]);
            assert_eq!(a[i + 1], a[1]);
        }
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn invalid_k() {
        let data = array![[0.0], [1.0]];
        assert_eq!(fit_kmeans(data.view(), 3, 0, 1).unwrap_err().code(), "invalid_k");
        assert_eq!(fit_kmeans(data.view(), 0, 0, 1).unwrap_err().code(), "invalid_k");
    }

    #[test]
    fn duplicate_points_do_not_break_seeding() {
        let data = array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        let m = fit_kmeans(data.view(), 3, 1, 2).unwrap();
        assert_eq!(m.inertia, 0.0);
        assert!(m.centroids.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn deterministic_per_seed() {
        let data = array![[0.0, 0.1], [0.3, 0.9], [0.5, 0.2], [0.8, 0.8], [0.9, 0.1], [0.2, 0.6]];
        let a = fit_kmeans(data.view(), 3, 9, 4).unwrap();
        let b = fit_kmeans(data.view(), 3, 9, 4).unwrap();
        assert_eq!(a, b);
    }
}
