//! Classifier heads trained on frozen embeddings.
//!
//! A head is either a single affine map to class logits or a one-hidden-layer
//! `tanh` network. Heads are the unit that gets fine-tuned, pseudo-labels the
//! unlabeled pool and is finally retrained on the ensembled soft labels.

mod io;
mod train;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSet;
use crate::error::HeadError;
use crate::outputs::ModelOutputs;
use crate::scalar::Scalar;

pub use io::{read_head_file, write_head_file};
pub use train::{
    learning_rate_at, logit_gradient, loss_gradient, train_head, train_head_with_report,
    TrainReport, TrainTargets,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Linear,
    Mlp { hidden_width: usize },
}

fn default_weight_decay() -> f64 {
    5e-4
}
fn default_batch_size() -> usize {
    32
}
fn default_warmup_fraction() -> f64 {
    0.025
}

/// Optimiser and architecture settings for one head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub architecture: Architecture,
    pub learning_rate: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_warmup_fraction")]
    pub warmup_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub label_smoothing: f64,
}

impl HeadConfig {
    pub fn new(architecture: Architecture, learning_rate: f64, epochs: usize) -> Self {
        Self {
            architecture,
            learning_rate,
            weight_decay: default_weight_decay(),
            epochs,
            batch_size: default_batch_size(),
            warmup_fraction: default_warmup_fraction(),
            seed: 0,
            label_smoothing: 0.0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), HeadError> {
        let bad = |msg: String| Err(HeadError::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay {} must be non-negative", self.weight_decay));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad(format!("warmup_fraction {} outside [0, 1)", self.warmup_fraction));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad(format!("label_smoothing {} outside [0, 1)", self.label_smoothing));
        }
        if let Architecture::Mlp { hidden_width: 0 } = self.architecture {
            return bad("hidden_width must be positive".into());
        }
        Ok(())
    }
}

/// Affine layer mapping `in` to `out` features: `y = W x + b`, `W` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<S> {
    pub weight: Array2<S>,
    pub bias: Array1<S>,
}

impl<S: Scalar> Layer<S> {
    fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    /// `inputs · Wᵀ + b` for a batch of row vectors.
    fn apply(&self, inputs: ArrayView2<'_, S>) -> Array2<S> {
        let mut out = inputs.dot(&self.weight.t());
        out += &self.bias;
        out
    }
}

/// Trained (or freshly initialised) head parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadModel<S> {
    architecture: Architecture,
    input_dim: usize,
    class_count: usize,
    seed: u64,
    layers: Vec<Layer<S>>,
}

/// Gradient tensors with the same layout as [`HeadModel::layers`].
pub type Gradients<S> = Vec<Layer<S>>;

impl<S: Scalar> HeadModel<S> {
    /// Seeded uniform initialisation in `±1/√fan_in`; biases start at zero.
    pub fn init(architecture: Architecture, input_dim: usize, class_count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |fan_out: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            Layer {
                weight: Array2::from_shape_simple_fn((fan_out, fan_in), || S::lit(dist.sample(&mut rng))),
                bias: Array1::zeros(fan_out),
            }
        };
        let layers = match architecture {
            Architecture::Linear => vec![layer(class_count, input_dim)],
            Architecture::Mlp { hidden_width } => {
                let hidden = layer(hidden_width, input_dim);
                let out = layer(class_count, hidden_width);
                vec![hidden, out]
            }
        };
        Self {
            architecture,
            input_dim,
            class_count,
            seed,
            layers,
        }
    }

    /// Assembles a model from explicit parameters, checking shapes.
    pub fn from_layers(
        architecture: Architecture,
        seed: u64,
        layers: Vec<Layer<S>>,
    ) -> Result<Self, HeadError> {
        let expected = match architecture {
            Architecture::Linear => 1,
            Architecture::Mlp { .. } => 2,
        };
        if layers.len() != expected {
            return Err(HeadError::Shape(format!(
                "{architecture:?} needs {expected} layers, got {}",
                layers.len()
            )));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.nrows() {
                return Err(HeadError::Shape(format!("layer {i}: bias/weight mismatch")));
            }
            if i > 0 && l.weight.ncols() != layers[i - 1].weight.nrows() {
                return Err(HeadError::Shape(format!("layer {i}: input width mismatch")));
            }
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(HeadError::Shape(format!("layer {i}: non-finite parameter")));
            }
        }
        if let Architecture::Mlp { hidden_width } = architecture {
            if layers[0].weight.nrows() != hidden_width {
                return Err(HeadError::Shape("hidden width mismatch".into()));
            }
        }
        let input_dim = layers[0].weight.ncols();
        let class_count = layers[layers.len() - 1].weight.nrows();
        Ok(Self {
            architecture,
            input_dim,
            class_count,
            seed,
            layers,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }
    pub fn class_count(&self) -> usize {
        self.class_count
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }
    pub(crate) fn layers_mut(&mut self) -> &mut [Layer<S>] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Returns `(features, logits)` for a batch of inputs.
    pub(crate) fn forward_batch(&self, inputs: ArrayView2<'_, S>) -> (Array2<S>, Array2<S>) {
        match self.architecture {
            Architecture::Linear => (inputs.to_owned(), self.layers[0].apply(inputs)),
            Architecture::Mlp { .. } => {
                let hidden = self.layers[0].apply(inputs).mapv_into(S::tanh);
                let logits = self.layers[1].apply(hidden.view());
                (hidden, logits)
            }
        }
    }

    pub fn logits(&self, inputs: ArrayView2<'_, S>) -> Result<Array2<S>, HeadError> {
        self.check_dim(inputs.ncols())?;
        Ok(self.forward_batch(inputs).1)
    }

    fn check_dim(&self, d: usize) -> Result<(), HeadError> {
        if d != self.input_dim {
            return Err(HeadError::Shape(format!(
                "input dimension {d} does not match head input {}",
                self.input_dim
            )));
        }
        Ok(())
    }
}

/// Runs a head over a set: features are the inputs for linear heads and the
/// hidden activations for MLP heads.
pub fn forward<S: Scalar>(model: &HeadModel<S>, set: &EmbeddingSet<S>) -> Result<ModelOutputs<S>, HeadError> {
    model.check_dim(set.dim())?;
    let (features, logits) = model.forward_batch(set.features());
    Ok(ModelOutputs::from_logits(set.ids().to_vec(), features, logits))
}

/// Max-shifted exponential normalisation.
pub fn softmax<S: Scalar>(logits: ArrayView1<'_, S>) -> Array1<S> {
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let mut out = logits.mapv(|z| (z - max).exp());
    let total: S = out.sum();
    out.mapv_inplace(|e| e / total);
    out
}

pub fn softmax_rows<S: Scalar>(logits: ArrayView2<'_, S>) -> Array2<S> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let p = softmax(row.view());
        row.assign(&p);
    }
    out
}
