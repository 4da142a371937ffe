//! Seeded k-means (k-means++ initialisation, Lloyd iterations).

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::ValidatorError;
use crate::scalar::Scalar;

pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per row (ties to the lowest index) and its distance.
fn assign(x: ArrayView2<'_, f64>, centroids: ArrayView2<'_, f64>) -> (Vec<usize>, Vec<f64>) {
    x.rows()
        .into_iter()
        .map(|row| {
            let mut best = (0, f64::INFINITY);
            for (c, centroid) in centroids.rows().into_iter().enumerate() {
                let d = sq_dist(row, centroid);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .unzip()
}

fn plus_plus_init(x: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut nearest: Vec<f64> = x.rows().into_iter().map(|r| sq_dist(r, x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target just above the final sum
            pick.unwrap_or_else(|| nearest.iter().rposition(|&w| w > 0.0).expect("positive total"))
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, row) in x.rows().into_iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(row, x.row(next)));
        }
    }
    x.select(Axis(0), &chosen)
}

/// Clusters rows of `features` into `k` groups.
///
/// Stops at an assignment fixpoint or after [`MAX_ITERATIONS`] updates. A
/// cluster that ends up empty is re-seeded at the point farthest from its
/// current centroid. Deterministic for a given seed.
pub fn kmeans<S: Scalar>(
    features: ArrayView2<'_, S>,
    k: usize,
    seed: u64,
) -> Result<ClusterAssignment, ValidatorError> {
    let x = features.mapv(Scalar::as_f64);
    let n = x.nrows();
    if k == 0 {
        return Err(ValidatorError::Empty("k must be positive"));
    }
    if k > n {
        return Err(ValidatorError::TooFewPoints { points: n, clusters: k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(x.view(), k, &mut rng);
    let (mut assignments, _) = assign(x.view(), centroids.view());
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; k];
        for (row, &c) in x.rows().into_iter().zip(&assignments) {
            let mut s = sums.row_mut(c);
            s += &row;
            counts[c] += 1;
        }
        let mut reseeded: Vec<usize> = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                let mean = &sums.row(c) / counts[c] as f64;
                centroids.row_mut(c).assign(&mean);
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|i| !reseeded.contains(i))
                    .map(|i| (i, sq_dist(x.row(i), centroids.row(assignments[i]))))
                    .fold((0, f64::NEG_INFINITY), |best, cand| if cand.1 > best.1 { cand } else { best })
                    .0;
                reseeded.push(far);
                let point = x.row(far).to_owned();
                centroids.row_mut(c).assign(&point);
            }
        }
        let (next, _) = assign(x.view(), centroids.view());
        if next == assignments {
            break;
        }
        assignments = next;
    }

    let inertia = x
        .rows()
        .into_iter()
        .zip(&assignments)
        .map(|(row, &c)| sq_dist(row, centroids.row(c)))
        .sum();
    Ok(ClusterAssignment {
        assignments,
        centroids,
        inertia,
        iterations,
    })
}
