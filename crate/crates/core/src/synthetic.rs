//! Synthetic "diverse views" benchmark: one latent Gaussian mixture seen
//! through several random linear projections with independent noise. Each
//! view plays the part of one foundation model.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingSet, SplitSpec};
use crate::heads::{Architecture, HeadConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub latent_dim: usize,
    pub view_dim: usize,
    pub views: usize,
    pub samples_per_class: usize,
    /// Standard deviation of the class means; within-class noise is unit.
    pub class_separation: f64,
    pub view_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 8,
            latent_dim: 16,
            view_dim: 64,
            views: 4,
            samples_per_class: 643,
            class_separation: 0.7,
            view_noise: 0.5,
            seed: 0,
        }
    }
}

/// 3 shots per class, then 1/16 validation and 5/32 test of the remainder.
/// With the default 643 samples per class this leaves 500 unlabeled per class.
pub fn benchmark_split(seed: u64) -> SplitSpec {
    SplitSpec::new(3, seed)
        .with_validation_fraction(0.0625)
        .with_test_fraction(0.15625)
}

/// The two head variants: a linear probe and a one-hidden-layer MLP.
pub fn benchmark_heads() -> Vec<HeadConfig> {
    vec![
        HeadConfig::new(Architecture::Linear, 0.01, 30),
        HeadConfig::new(Architecture::Mlp { hidden_width: 64 }, 0.01, 30),
    ]
}

fn gaussian_matrix(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
}

/// Labeled views of one shared latent sample, class-major with ids `0..n`.
///
/// View `v` is `z Aᵥᵀ + ε` with `Aᵥ` a `view_dim × latent_dim` matrix of
/// `N(0, 1/latent_dim)` entries and `ε ~ N(0, view_noise²)`.
pub fn diverse_views(spec: &SyntheticSpec) -> Vec<(String, EmbeddingSet<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means = gaussian_matrix(spec.classes, spec.latent_dim, spec.class_separation, &mut rng);
    let n = spec.classes * spec.samples_per_class;
    let labels: Vec<usize> = (0..n).map(|i| i / spec.samples_per_class).collect();
    let mut latent = Array2::<f64>::zeros((n, spec.latent_dim));
    for (i, mut row) in latent.rows_mut().into_iter().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            *v = means[[labels[i], j]] + noise;
        }
    }
    (0..spec.views)
        .map(|v| {
            let mut view_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (0xA5A5_0000 + v as u64));
            let projection =
                gaussian_matrix(spec.view_dim, spec.latent_dim, (spec.latent_dim as f64).recip().sqrt(), &mut view_rng);
            let noise = gaussian_matrix(n, spec.view_dim, spec.view_noise, &mut view_rng);
            let features = latent.dot(&projection.t()) + noise;
            let set = EmbeddingSet::with_sequential_ids(features, Some(labels.clone()), spec.classes)
                .expect("synthetic features are finite");
            (format!("view{v}"), set)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_labels() {
        let spec = SyntheticSpec {
            samples_per_class: 5,
            ..Default::default()
        };
        let views = diverse_views(&spec);
        assert_eq!(views.len(), 4);
        for (_, set) in &views {
            assert_eq!((set.len(), set.dim(), set.class_count()), (40, 64, 8));
            assert_eq!(set.labels().unwrap()[39], 7);
        }
        assert_ne!(views[0].1.features(), views[1].1.features());
    }

    #[test]
    fn default_split_leaves_500_unlabeled_per_class() {
        let spec = SyntheticSpec {
            views: 1,
            ..Default::default()
        };
        let views = diverse_views(&spec);
        let split = crate::data::make_split(&views[0].1, &benchmark_split(0)).unwrap();
        assert_eq!(split.labeled.len(), 24);
        assert_eq!(split.validation.len(), 320);
        assert_eq!(split.test.len(), 800);
        assert_eq!(split.unlabeled.len(), 4000);
        let (_, truth) = split.unlabeled_truth().reveal();
        for c in 0..8 {
            assert_eq!(truth.iter().filter(|&&l| l == c).count(), 500);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SyntheticSpec {
            samples_per_class: 3,
            views: 2,
            ..Default::default()
        };
        assert_eq!(diverse_views(&spec), diverse_views(&spec));
    }
}
