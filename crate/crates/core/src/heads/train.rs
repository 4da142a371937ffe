use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{softmax, Architecture, Gradients, HeadConfig, HeadModel, Layer};
use crate::data::EmbeddingSet;
use crate::error::HeadError;
use crate::scalar::Scalar;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const SHUFFLE_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// Training targets: class indices or row-stochastic soft labels.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainTargets<S> {
    Hard(Vec<usize>),
    Soft(Array2<S>),
}

impl<S: Scalar> TrainTargets<S> {
    pub fn len(&self) -> usize {
        match self {
            Self::Hard(l) => l.len(),
            Self::Soft(m) => m.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dense `n × classes` target matrix.
    pub fn to_matrix(&self, classes: usize) -> Result<Array2<S>, HeadError> {
        match self {
            Self::Hard(labels) => {
                let mut m = Array2::zeros((labels.len(), classes));
                for (i, &l) in labels.iter().enumerate() {
                    if l >= classes {
                        return Err(HeadError::InvalidTargets(format!(
                            "label {l} at index {i} outside [0, {classes})"
                        )));
                    }
                    m[[i, l]] = S::one();
                }
                Ok(m)
            }
            Self::Soft(m) => {
                if m.ncols() != classes {
                    return Err(HeadError::Shape(format!(
                        "soft targets have {} columns, expected {classes}",
                        m.ncols()
                    )));
                }
                for (i, row) in m.rows().into_iter().enumerate() {
                    let sum: f64 = row.iter().map(|v| v.as_f64()).sum();
                    if row.iter().any(|v| !(v.as_f64() >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
                        return Err(HeadError::InvalidTargets(format!(
                            "row {i} is not a probability distribution (sum {sum})"
                        )));
                    }
                }
                Ok(m.clone())
            }
        }
    }
}

/// Per-sample gradient of soft cross-entropy with respect to the logits:
/// `softmax(logits) - target`.
pub fn logit_gradient<S: Scalar>(logits: ArrayView1<'_, S>, target: ArrayView1<'_, S>) -> Array1<S> {
    softmax(logits) - &target
}

/// Mean soft cross-entropy `-Σ p log q` over the batch and its exact
/// gradient with respect to every parameter. Weight decay is not included;
/// the optimiser applies it decoupled from the gradient.
pub fn loss_gradient<S: Scalar>(
    model: &HeadModel<S>,
    batch: ArrayView2<'_, S>,
    targets: ArrayView2<'_, S>,
) -> Result<(S, Gradients<S>), HeadError> {
    if batch.ncols() != model.input_dim() || targets.ncols() != model.class_count() {
        return Err(HeadError::Shape(format!(
            "batch {:?} / targets {:?} do not fit head {}→{}",
            batch.dim(),
            targets.dim(),
            model.input_dim(),
            model.class_count()
        )));
    }
    if batch.nrows() != targets.nrows() || batch.nrows() == 0 {
        return Err(HeadError::Shape(format!(
            "batch has {} rows, targets {}",
            batch.nrows(),
            targets.nrows()
        )));
    }
    let scale = S::one() / S::lit(batch.nrows() as f64);
    let (hidden, logits) = model.forward_batch(batch);

    let mut loss = S::zero();
    let mut dlogits = Array2::zeros(logits.raw_dim());
    for ((z, p), mut dz) in logits
        .rows()
        .into_iter()
        .zip(targets.rows())
        .zip(dlogits.rows_mut())
    {
        let max = z.iter().copied().fold(S::neg_infinity(), S::max);
        let log_norm = z.iter().map(|&v| (v - max).exp()).sum::<S>().ln() + max;
        for (&zc, &pc) in z.iter().zip(p.iter()) {
            if pc != S::zero() {
                loss -= pc * (zc - log_norm);
            }
        }
        for ((d, &zc), &pc) in dz.iter_mut().zip(z.iter()).zip(p.iter()) {
            *d = ((zc - log_norm).exp() - pc) * scale;
        }
    }
    loss *= scale;

    let layers = model.layers();
    let grads = match model.architecture() {
        Architecture::Linear => vec![affine_grad(dlogits.view(), batch)],
        Architecture::Mlp { .. } => {
            let out = affine_grad(dlogits.view(), hidden.view());
            let mut dpre = dlogits.dot(&layers[1].weight);
            dpre.zip_mut_with(&hidden, |d, &h| *d *= S::one() - h * h);
            let first = affine_grad(dpre.view(), batch);
            vec![first, out]
        }
    };
    Ok((loss, grads))
}

fn affine_grad<S: Scalar>(dout: ArrayView2<'_, S>, inputs: ArrayView2<'_, S>) -> Layer<S> {
    Layer {
        weight: dout.t().dot(&inputs),
        bias: dout.sum_axis(Axis(0)),
    }
}

/// Learning rate for 0-based `step` of `total`: linear warm-up over the
/// first `warmup_steps`, then cosine decay towards zero.
pub fn learning_rate_at(base: f64, step: usize, total: usize, warmup_steps: usize) -> f64 {
    if step < warmup_steps {
        return base * (step + 1) as f64 / warmup_steps as f64;
    }
    let span = (total - warmup_steps).max(1) as f64;
    let progress = (step - warmup_steps) as f64 / span;
    0.5 * base * (1.0 + (PI * progress).cos())
}

/// Model plus the mean training loss of every epoch.
#[derive(Debug, Clone)]
pub struct TrainReport<S> {
    pub model: HeadModel<S>,
    pub epoch_losses: Vec<f64>,
    pub iterations: usize,
}

pub fn train_head<S: Scalar>(
    train: &EmbeddingSet<S>,
    targets: &TrainTargets<S>,
    config: &HeadConfig,
) -> Result<HeadModel<S>, HeadError> {
    train_head_with_report(train, targets, config).map(|r| r.model)
}

/// Mini-batch AdamW with decoupled weight decay under a warm-up + cosine
/// schedule. Final partial batches are used. Deterministic given the seed.
pub fn train_head_with_report<S: Scalar>(
    train: &EmbeddingSet<S>,
    targets: &TrainTargets<S>,
    config: &HeadConfig,
) -> Result<TrainReport<S>, HeadError> {
    config.validate()?;
    if targets.len() != train.len() {
        return Err(HeadError::Shape(format!(
            "{} targets for {} samples",
            targets.len(),
            train.len()
        )));
    }
    let classes = train.class_count();
    if classes == 0 {
        return Err(HeadError::Shape("class count must be positive".into()));
    }
    let mut target_matrix = targets.to_matrix(classes)?;
    if config.label_smoothing > 0.0 {
        let eps = S::lit(config.label_smoothing);
        let floor = eps / S::lit(classes as f64);
        target_matrix.mapv_inplace(|p| (S::one() - eps) * p + floor);
    }

    let mut model = HeadModel::init(config.architecture, train.dim(), classes, config.seed);
    let n = train.len();
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let total = config.epochs * batches_per_epoch;
    let warmup = (config.warmup_fraction * total as f64).floor() as usize;

    let mut first_moment: Gradients<S> = model.layers().iter().map(Layer::zeros_like).collect();
    let mut second_moment = first_moment.clone();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let features = train.features();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut step = 0;

    let (b1, b2) = (S::lit(BETA1), S::lit(BETA2));
    let eps = S::lit(ADAM_EPS);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = features.select(Axis(0), chunk);
            let p = target_matrix.select(Axis(0), chunk);
            let (loss, grads) = loss_gradient(&model, x.view(), p.view())?;
            if !loss.is_finite() {
                return Err(HeadError::Divergence { iteration: step });
            }
            loss_sum += loss.as_f64() * chunk.len() as f64;

            let lr = S::lit(learning_rate_at(config.learning_rate, step, total, warmup));
            let decay = S::one() - lr * S::lit(config.weight_decay);
            let t = (step + 1) as i32;
            let bc1 = S::one() - b1.powi(t);
            let bc2 = S::one() - b2.powi(t);
            for (((param, grad), m), v) in model
                .layers_mut()
                .iter_mut()
                .zip(&grads)
                .zip(&mut first_moment)
                .zip(&mut second_moment)
            {
                let update = |w: &mut S, g: S, m: &mut S, v: &mut S| {
                    *m = b1 * *m + (S::one() - b1) * g;
                    *v = b2 * *v + (S::one() - b2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *w = *w * decay - lr * m_hat / (v_hat.sqrt() + eps);
                };
                ndarray::Zip::from(&mut param.weight)
                    .and(&grad.weight)
                    .and(&mut m.weight)
                    .and(&mut v.weight)
                    .for_each(|w, &g, m, v| update(w, g, m, v));
                ndarray::Zip::from(&mut param.bias)
                    .and(&grad.bias)
                    .and(&mut m.bias)
                    .and(&mut v.bias)
                    .for_each(|w, &g, m, v| update(w, g, m, v));
            }
            step += 1;
        }
        epoch_losses.push(loss_sum / n.max(1) as f64);
    }
    Ok(TrainReport {
        model,
        epoch_losses,
        iterations: step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::forward;
    use crate::outputs::accuracy;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn blobs(per_class: usize, seed: u64) -> EmbeddingSet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for class in 0..2 {
            let center = if class == 0 { -2.0 } else { 2.0 };
            for _ in 0..per_class {
                let jitter: f64 = rng.random_range(-0.5..0.5);
                let other: f64 = rng.random_range(-1.0..1.0);
                rows.extend([center + jitter, other]);
                labels.push(class);
            }
        }
        let features = Array2::from_shape_vec((2 * per_class, 2), rows).unwrap();
        EmbeddingSet::with_sequential_ids(features, Some(labels), 2).unwrap()
    }

    #[test]
    fn separable_blobs_are_fit_exactly() {
        let set = blobs(10, 3);
        // margin check: first coordinates lie in [-2.5,-1.5] and [1.5,2.5]
        let labels = set.labels().unwrap().to_vec();
        let config = HeadConfig::new(Architecture::Linear, 0.1, 50).with_seed(5);
        let model = train_head(&set, &TrainTargets::Hard(labels.clone()), &config).unwrap();
        let out = forward(&model, &set).unwrap();
        assert_eq!(accuracy(&out.predictions, &labels), 1.0);
    }

    #[test]
    fn one_hot_soft_targets_match_hard_targets_bitwise() {
        let set = blobs(7, 8);
        let labels = set.labels().unwrap().to_vec();
        let hard = TrainTargets::Hard(labels.clone());
        let soft = TrainTargets::Soft(hard.to_matrix(2).unwrap());
        let mut config = HeadConfig::new(Architecture::Mlp { hidden_width: 4 }, 0.05, 6).with_seed(1);
        config.batch_size = 5;
        let a = train_head(&set, &hard, &config).unwrap();
        let b = train_head(&set, &soft, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_epochs_returns_initialisation() {
        let set = blobs(4, 1);
        let config = HeadConfig::new(Architecture::Linear, 0.1, 0).with_seed(9);
        let model = train_head(&set, &TrainTargets::Hard(set.labels().unwrap().to_vec()), &config).unwrap();
        assert_eq!(model, HeadModel::init(Architecture::Linear, 2, 2, 9));
    }

    #[test]
    fn training_is_deterministic() {
        let set = blobs(9, 4);
        let targets = TrainTargets::Hard(set.labels().unwrap().to_vec());
        let mut config = HeadConfig::new(Architecture::Mlp { hidden_width: 3 }, 0.02, 4).with_seed(77);
        config.batch_size = 4;
        assert_eq!(
            train_head(&set, &targets, &config).unwrap(),
            train_head(&set, &targets, &config).unwrap()
        );
    }

    #[test]
    fn self_target_has_zero_logit_gradient() {
        let z = array![0.3_f64, -1.0, 2.0];
        let g = logit_gradient(z.view(), softmax(z.view()).view());
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn zero_head_gradient_is_half() {
        let z = array![0.0_f64, 0.0];
        let g = logit_gradient(z.view(), array![1.0, 0.0].view());
        assert_eq!(g, array![-0.5, 0.5]);

        // same through loss_gradient on a zero linear head: dL/db = mean(q - p)
        let zero = Layer {
            weight: Array2::zeros((2, 3)),
            bias: Array1::zeros(2),
        };
        let model = HeadModel::from_layers(Architecture::Linear, 0, vec![zero]).unwrap();
        let x = array![[1.0, 2.0, 3.0], [0.0, -1.0, 4.0]];
        let p = array![[1.0, 0.0], [1.0, 0.0]];
        let (loss, grads) = loss_gradient(&model, x.view(), p.view()).unwrap();
        assert_abs_diff_eq!(loss, 2.0_f64.ln(), epsilon = 1e-15);
        assert_eq!(grads[0].bias, array![-0.5, 0.5]);
    }

    #[test]
    fn cosine_schedule_shape() {
        assert_eq!(learning_rate_at(1.0, 0, 100, 4), 0.25);
        assert_eq!(learning_rate_at(1.0, 3, 100, 4), 1.0);
        assert_eq!(learning_rate_at(1.0, 4, 100, 4), 1.0);
        let mid = learning_rate_at(1.0, 52, 100, 4);
        assert_abs_diff_eq!(mid, 0.5, epsilon = 1e-12);
        let last = learning_rate_at(1.0, 99, 100, 4);
        assert!(last > 0.0 && last < 1e-3);
        let mut prev = f64::INFINITY;
        for s in 4..100 {
            let lr = learning_rate_at(1.0, s, 100, 4);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn rejects_bad_targets() {
        let set = blobs(2, 0);
        let config = HeadConfig::new(Architecture::Linear, 0.1, 1);
        assert!(matches!(
            train_head(&set, &TrainTargets::Hard(vec![0, 1, 2, 0]), &config),
            Err(HeadError::InvalidTargets(_))
        ));
        assert!(matches!(
            train_head(&set, &TrainTargets::Hard(vec![0]), &config),
            Err(HeadError::Shape(_))
        ));
        let soft = array![[0.5, 0.6], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(
            train_head(&set, &TrainTargets::Soft(soft), &config),
            Err(HeadError::InvalidTargets(_))
        ));
    }

    #[test]
    fn divergence_is_reported() {
        // one Adam step of size ~1e38 pushes f32 logits past the representable range
        let features = array![[10.0_f32, 10.0], [-10.0, -10.0]];
        let set = EmbeddingSet::with_sequential_ids(features, Some(vec![0, 1]), 2).unwrap();
        let config = HeadConfig::new(Architecture::Linear, 1e38, 3).with_seed(2);
        assert!(matches!(
            train_head(&set, &TrainTargets::Hard(vec![0, 1]), &config),
            Err(HeadError::Divergence { iteration: 1 })
        ));
    }

    #[test]
    fn full_batch_gradient_descent_loss_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = Array2::from_shape_simple_fn((12, 4), || rng.sample::<f64, _>(StandardNormal));
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let p = TrainTargets::<f64>::Hard(labels).to_matrix(3).unwrap();
        for arch in [Architecture::Linear, Architecture::Mlp { hidden_width: 5 }] {
            let mut model = HeadModel::<f64>::init(arch, 4, 3, 3);
            let mut prev = f64::INFINITY;
            for _ in 0..200 {
                let (loss, grads) = loss_gradient(&model, x.view(), p.view()).unwrap();
                assert!(loss <= prev + 1e-15, "loss rose from {prev} to {loss}");
                prev = loss;
                for (layer, g) in model.layers_mut().iter_mut().zip(&grads) {
                    layer.weight.scaled_add(-1e-3, &g.weight);
                    layer.bias.scaled_add(-1e-3, &g.bias);
                }
            }
        }
    }
}
