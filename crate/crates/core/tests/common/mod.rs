//! Test support: independent oracles and input generators.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use bmi_curate::ingest::{BoundingBox, ImageRecord, Keypoint, KeypointSet, Measurement, NUM_KEYPOINTS};
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub mod corpus;
pub mod crops;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---- PCA oracle -----------------------------------------------------------

pub struct EigenOracle {
    /// Descending.
    pub values: Vec<f64>,
    /// Column i pairs with values[i].
    pub vectors: DMatrix<f64>,
}

/// Sample covariance (n - 1) decomposed with nalgebra's symmetric solver.
pub fn covariance_eigen(data: &Array2<f64>) -> EigenOracle {
    let (n, d) = data.dim();
    let m = DMatrix::from_row_iterator(n, d, data.iter().copied());
    let mean = m.row_mean();
    let centred = DMatrix::from_fn(n, d, |i, j| m[(i, j)] - mean[j]);
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    EigenOracle {
        values: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        vectors: DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]),
    }
}

/// Smallest p whose leading eigenvalues reach `threshold` of the total.
pub fn minimal_components(values: &[f64], threshold: f64) -> usize {
    let total: f64 = values.iter().sum();
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        acc += v;
        if acc / total >= threshold - 1e-12 {
            return i + 1;
        }
    }
    values.len()
}

/// Orthogonal projector onto the span of the given rows.
pub fn projector_from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows[0].len();
    let c = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    c.transpose() * c
}

pub fn projector_from_columns(m: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let c = m.columns(0, p).into_owned();
    &c * c.transpose()
}

// ---- k-means oracle --------------------------------------------------------

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Plain Lloyd iteration until the assignment stops changing; returns the
/// inertia of the fixed point. Empty clusters keep their previous centre.
pub fn lloyd_fixed_point(points: &[Vec<f64>], mut centres: Vec<Vec<f64>>) -> f64 {
    let k = centres.len();
    let nearest = |c: &[Vec<f64>], p: &[f64]| {
        (0..k)
            .min_by(|&a, &b| sq(p, &c[a]).total_cmp(&sq(p, &c[b])).then(a.cmp(&b)))
            .unwrap()
    };
    let mut assign: Vec<usize> = points.iter().map(|p| nearest(&centres, p)).collect();
    for _ in 0..1000 {
        for (c, centre) in centres.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
            if !members.is_empty() {
                for (j, v) in centre.iter_mut().enumerate() {
                    *v = members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64;
                }
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(&centres, p)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    points.iter().zip(&assign).map(|(p, &a)| sq(p, &centres[a])).sum()
}

/// Best fixed-point inertia over Lloyd runs started from every k-subset of
/// distinct points.
pub fn exhaustive_kmeans(points: &[Vec<f64>], k: usize) -> f64 {
    fn rec(points: &[Vec<f64>], k: usize, start: usize, chosen: &mut Vec<usize>, best: &mut f64) {
        if chosen.len() == k {
            let init = chosen.iter().map(|&i| points[i].clone()).collect();
            *best = best.min(lloyd_fixed_point(points, init));
            return;
        }
        for i in start..points.len() {
            chosen.push(i);
            rec(points, k, i + 1, chosen, best);
            chosen.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(points, k, 0, &mut Vec::new(), &mut best);
    best
}

pub fn to_array(points: &[Vec<f64>]) -> Array2<f64> {
    let d = points[0].len();
    Array2::from_shape_vec((points.len(), d), points.concat()).unwrap()
}

// ---- generators -------------------------------------------------------------

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    // Mixed column scales so the spectrum is not flat.
    let scales: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..2.0)).collect();
    Array2::from_shape_fn((n, d), |(_, j)| rng.random_range(-1.0..1.0) * scales[j])
}

/// Isotropic Gaussian blobs with unit sigma and centres at least
/// `min_sep` apart. Returns points and their true labels.
/// Unit-variance isotropic blobs, `n / k` points each. Centres are uniform in
/// `[-min_sep, min_sep]^dim` with pairwise distance at least `min_sep`, so no
/// pair of blobs is much farther apart than any other.
pub fn gaussian_blobs(rng: &mut ChaCha8Rng, n: usize, k: usize, dim: usize, min_sep: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut centres: Vec<Vec<f64>> = Vec::new();
    let mut draws = 0;
    while centres.len() < k {
        draws += 1;
        if draws % 10_000 == 0 {
            centres.clear();
        }
        let c: Vec<f64> = (0..dim).map(|_| rng.random_range(-min_sep..min_sep)).collect();
        if centres.iter().all(|o| sq(o, &c).sqrt() >= min_sep) {
            centres.push(c);
        }
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut pts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        pts.push(centres[c].iter().map(|v| v + normal.sample(rng)).collect());
        labels.push(c);
    }
    (pts, labels)
}

pub fn keypoints(points: &[(f64, f64, f64)]) -> KeypointSet {
    let pts: Vec<Keypoint> = points.iter().map(|&(x, y, v)| Keypoint::new(x, y, v)).collect();
    KeypointSet::from_slice(&pts).unwrap()
}

pub fn record(id: &str, subject: &str, size: (u32, u32), bbox: Option<BoundingBox>, kps: Option<KeypointSet>) -> ImageRecord {
    ImageRecord {
        image_id: id.to_owned(),
        subject_id: subject.to_owned(),
        image_path: format!("{id}.png"),
        image_width: size.0,
        image_height: size.1,
        bbox,
        keypoints: kps,
        face_bbox: None,
        measurement: Measurement::new(70.0, 1.75).unwrap(),
    }
}

/// Records for `counts[i]` images of subject i.
pub fn corpus_with_counts(counts: &[usize]) -> Vec<ImageRecord> {
    let mut out = Vec::new();
    for (s, &c) in counts.iter().enumerate() {
        for j in 0..c {
            out.push(record(&format!("s{s}_i{j}"), &format!("s{s}"), (100, 100), None, None));
        }
    }
    out
}

pub fn random_keypoints(rng: &mut ChaCha8Rng, w: f64, h: f64) -> KeypointSet {
    let pts: Vec<(f64, f64, f64)> = (0..NUM_KEYPOINTS)
        .map(|_| (rng.random_range(0.0..w), rng.random_range(0.0..h), rng.random_range(0.0..=1.0)))
        .collect();
    keypoints(&pts)
}

/// `subjects` subjects with 1..=max_images images each, in shuffled order.
pub fn random_corpus(rng: &mut ChaCha8Rng, subjects: usize, max_images: usize) -> Vec<ImageRecord> {
    use rand::seq::SliceRandom;
    let counts: Vec<usize> = (0..subjects).map(|_| rng.random_range(1..=max_images)).collect();
    let mut recs = corpus_with_counts(&counts);
    recs.shuffle(rng);
    recs
}

/// Replays greedy largest-gap assignment over a given subject order.
pub fn greedy_oracle(order: &[(&str, usize)], ratios: [f64; 3], total: usize) -> Vec<usize> {
    let targets: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut actual = [0.0f64; 3];
    order
        .iter()
        .map(|&(_, n)| {
            // strict comparison keeps the earlier split on ties
            let gaps: Vec<f64> = (0..3).map(|s| targets[s] - actual[s]).collect();
            let best = (1..3).fold(0, |b, s| if gaps[s] > gaps[b] { s } else { b });
            actual[best] += n as f64;
            best
        })
        .collect()
}

/// Counter-based splitmix64 stream mapped to [-2, 2), as used to build the
/// committed model reference outputs.
pub fn splitmix_values(index: u64, len: usize) -> Vec<f32> {
    (1..=len as u64)
        .map(|j| {
            let mut z = (index << 32).wrapping_add(j.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            (z >> 40) as f32 * 2f32.powi(-24) * 4.0 - 2.0
        })
        .collect()
}
