//! Multi-source pseudo-label ensembling for few-shot classification heads
//! on frozen embeddings.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common instantiations.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod format;
pub mod heads;
pub mod linalg;
pub mod outputs;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod synthetic;
pub mod validators;

pub use data::{make_split, DatasetSplit, EmbeddingSet, HiddenLabels, SplitSpec};
pub use ensemble::{EnsembleStrategy, PseudoLabelSet, ThresholdPolicy};
pub use error::{DataError, EnsembleError, FormatError, HeadError, PipelineError, ValidatorError};
pub use heads::{Architecture, HeadConfig, HeadModel};
pub use outputs::ModelOutputs;
pub use pipeline::{ExperimentConfig, PairId, VpetResult};
pub use report::RankingReport;
pub use scalar::Scalar;

pub type EmbeddingSetF32 = EmbeddingSet<f32>;
pub type EmbeddingSetF64 = EmbeddingSet<f64>;
pub type DatasetSplitF32 = DatasetSplit<f32>;
pub type DatasetSplitF64 = DatasetSplit<f64>;
pub type HeadModelF32 = HeadModel<f32>;
pub type HeadModelF64 = HeadModel<f64>;
pub type ModelOutputsF32 = ModelOutputs<f32>;
pub type ModelOutputsF64 = ModelOutputs<f64>;
pub type PseudoLabelSetF32 = PseudoLabelSet<f32>;
pub type PseudoLabelSetF64 = PseudoLabelSet<f64>;
