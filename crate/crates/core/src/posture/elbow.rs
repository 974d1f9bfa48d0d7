//! Elbow selection on an inertia-vs-k curve.
//!
//! Points are rescaled to the unit square (k and inertia independently) and
//! the chosen k is the one lying farthest below the chord joining the first
//! and last points. Points on or above the chord never win, so a straight
//! line selects the smallest k.

use crate::error::{Error, Result};

/// Distances closer than this are treated as ties (resolved to smaller k).
const TIE_EPS: f64 = 1e-12;

/// Signed distance of every point below the first-to-last chord, after
/// rescaling both axes to [0, 1]. Validates the key sequence.
pub fn chord_distances(inertias: &[(usize, f64)]) -> Result<Vec<f64>> {
    if inertias.len() < 2 {
        return Err(Error::NonMonotoneK);
    }
    if inertias.windows(2).any(|w| w[1].0 != w[0].0 + 1) {
        return Err(Error::NonMonotoneK);
    }
    if inertias.iter().any(|(_, v)| !v.is_finite()) {
        return Err(Error::malformed("elbow input", "non-finite inertia"));
    }
    let k_min = inertias[0].0 as f64;
    let k_span = (inertias[inertias.len() - 1].0 as f64) - k_min;
    let lo = inertias.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = inertias.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let y_span = hi - lo;

    let scaled: Vec<(f64, f64)> = inertias
        .iter()
        .map(|&(k, v)| {
            let x = (k as f64 - k_min) / k_span;
            let y = if y_span > 0.0 { (v - lo) / y_span } else { 0.0 };
            (x, y)
        })
        .collect();
    let (x0, y0) = scaled[0];
    let (x1, y1) = scaled[scaled.len() - 1];
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len = (dx * dx + dy * dy).sqrt();
    Ok(scaled
        .iter()
        .map(|&(x, y)| -(dx * (y - y0) - dy * (x - x0)) / len)
        .collect())
}

/// Pick k at the elbow of `inertias`, given as consecutive `(k, inertia)`
/// pairs in increasing k.
pub fn elbow_select(inertias: &[(usize, f64)]) -> Result<usize> {
    let dists = chord_distances(inertias)?;
    let mut best = (inertias[0].0, 0.0);
    for (&(k, _), &d) in inertias.iter().zip(&dists) {
        if d > best.1 + TIE_EPS {
            best = (k, d);
        }
    }
    Ok(best.0)
}
