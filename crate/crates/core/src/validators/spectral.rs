//! Criteria computed directly from feature and probability matrices:
//! Calinski–Harabasz, RankMe and batch nuclear norm.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2};

use super::Score;
use crate::error::ValidatorError;
use crate::linalg::singular_values;
use crate::scalar::Scalar;

pub const DEFAULT_RANKME_EPSILON: f64 = 1e-7;

fn promote<S: Scalar>(m: ArrayView2<'_, S>) -> Array2<f64> {
    m.mapv(Scalar::as_f64)
}

/// Calinski–Harabasz index of `features` grouped by `groups`:
/// `[Σ nᵢ‖cᵢ − c‖² / (k − 1)] / [Σᵢ Σ_{x∈Cᵢ} ‖x − cᵢ‖² / (n − k)]`.
///
/// Undefined with fewer than two groups or `n ≤ k`; unbounded (best) when
/// every group collapses to a point.
pub fn chi<S: Scalar>(features: ArrayView2<'_, S>, groups: &[usize]) -> Result<Score, ValidatorError> {
    let x = promote(features);
    let (n, d) = x.dim();
    if groups.len() != n {
        return Err(ValidatorError::LengthMismatch {
            left: n,
            right: groups.len(),
        });
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (row, &g) in groups.iter().enumerate() {
        members.entry(g).or_default().push(row);
    }
    let k = members.len();
    if k < 2 {
        return Ok(Score::Undefined("fewer than two groups"));
    }
    if n <= k {
        return Ok(Score::Undefined("no more samples than groups"));
    }
    let overall = x.sum_axis(ndarray::Axis(0)) / n as f64;
    let mut between = 0.0;
    let mut within = 0.0;
    for rows in members.values() {
        let mut centroid = Array1::<f64>::zeros(d);
        for &r in rows {
            centroid += &x.row(r);
        }
        centroid /= rows.len() as f64;
        between += rows.len() as f64 * squared_distance(centroid.view(), overall.view());
        for &r in rows {
            within += squared_distance(x.row(r), centroid.view());
        }
    }
    if within == 0.0 {
        return Ok(Score::Unbounded);
    }
    Ok(Score::Value(
        (between / (k - 1) as f64) / (within / (n - k) as f64),
    ))
}

fn squared_distance(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Smooth effective rank: `exp(-Σ pₖ ln pₖ)` with
/// `pₖ ∝ σₖ / Σσ + epsilon` over the singular values of `features`.
///
/// With `epsilon = 0` the score is scale-invariant and equals `r` for `r`
/// equal non-zero singular values. Undefined for the all-zero matrix.
pub fn rankme<S: Scalar>(features: ArrayView2<'_, S>, epsilon: f64) -> Result<Score, ValidatorError> {
    if features.is_empty() {
        return Err(ValidatorError::Empty("feature matrix"));
    }
    let sigma = singular_values(promote(features).view());
    let total: f64 = sigma.iter().sum();
    if total == 0.0 {
        return Ok(Score::Undefined("all-zero feature matrix"));
    }
    let p: Vec<f64> = sigma.iter().map(|s| s / total + epsilon).collect();
    let norm: f64 = p.iter().sum();
    let entropy: f64 = p
        .iter()
        .map(|&pk| pk / norm)
        .filter(|&pk| pk > 0.0)
        .map(|pk| -pk * pk.ln())
        .sum();
    Ok(Score::Value(entropy.exp()))
}

/// Nuclear norm of the full row-stochastic prediction matrix.
pub fn bnm<S: Scalar>(probabilities: ArrayView2<'_, S>) -> Result<f64, ValidatorError> {
    let p = promote(probabilities);
    for (row, values) in p.rows().into_iter().enumerate() {
        let sum: f64 = values.sum();
        if values.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(ValidatorError::NotStochastic { row, sum });
        }
    }
    Ok(singular_values(p.view()).into_iter().sum())
}
