//! The vector-distance baseline: centroid distance against a fitted
//! decision threshold.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum ThresholdError {
    #[error("threshold fitting needs at least one positive and one negative pair")]
    SingleClass,
    #[error("centroid dimensions differ: {lhs} vs {rhs}")]
    DimMismatch { lhs: usize, rhs: usize },
}

pub fn euclidean_distance<S: Real>(a: &[S], b: &[S]) -> Result<S, ThresholdError> {
    if a.len() != b.len() {
        return Err(ThresholdError::DimMismatch {
            lhs: a.len(),
            rhs: b.len(),
        });
    }
    let sum: S = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(sum.sqrt())
}

/// Consistent iff the centroid distance is strictly below the threshold;
/// ties classify as inconsistent.
pub fn decide_distance<S: Real>(
    text_centroid: &[S],
    graph_centroid: &[S],
    threshold: S,
) -> Result<bool, ThresholdError> {
    Ok(euclidean_distance(text_centroid, graph_centroid)? < threshold)
}

/// F1 of the consistent class at the given threshold.
fn f1_at<S: Real>(pairs: &[(S, bool)], threshold: S) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for &(dist, positive) in pairs {
        let predicted = dist < threshold;
        match (predicted, positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if 2 * tp + fp + fn_ == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Fit the decision distance on (distance, is-positive) training pairs:
/// the midpoint between consecutive distinct sorted distances that maximizes
/// the F1 of the consistent class. Ties resolve to the smallest threshold.
pub fn fit_distance_threshold<S: Real>(pairs: &[(S, bool)]) -> Result<S, ThresholdError> {
    let has_pos = pairs.iter().any(|&(_, p)| p);
    let has_neg = pairs.iter().any(|&(_, p)| !p);
    if !has_pos || !has_neg {
        return Err(ThresholdError::SingleClass);
    }
    let mut distances: Vec<S> = pairs.iter().map(|&(d, _)| d).collect();
    distances.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    distances.dedup();

    if distances.len() == 1 {
        // all distances equal: threshold at that value, everything inconsistent
        return Ok(distances[0]);
    }

    let half = S::of(0.5);
    let mut best = (distances[0] + distances[1]) * half;
    let mut best_f1 = f1_at(pairs, best);
    for w in distances.windows(2).skip(1) {
        let candidate = (w[0] + w[1]) * half;
        let f1 = f1_at(pairs, candidate);
        if f1 > best_f1 {
            best = candidate;
            best_f1 = f1;
        }
    }
    Ok(best)
}
