//! Pseudo-label generation and ensembling.
//!
//! Each trained head labels the unlabeled pool; the per-source labels are
//! combined into one soft distribution per sample. `MeanLabels` averages
//! one-hot argmax votes and is therefore blind to how confident (or how
//! well calibrated) each source is. `MeanLogits` and `MeanProbabilities`
//! average raw scores and are dominated by the sharpest source.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::HiddenLabels;
use crate::error::{EnsembleError, FormatError};
use crate::format::{Emb1Record, Manifest};
use crate::heads::{softmax, softmax_rows};
use crate::outputs::{argmax, ModelOutputs};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleStrategy {
    MeanLabels,
    MeanLogits,
    MeanProbabilities,
}

impl EnsembleStrategy {
    pub fn name(self) -> &'static str {
        match self {
            Self::MeanLabels => "mean_labels",
            Self::MeanLogits => "mean_logits",
            Self::MeanProbabilities => "mean_probabilities",
        }
    }
}

impl fmt::Display for EnsembleStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnsembleStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "mean_labels" => Ok(Self::MeanLabels),
            "mean_logits" => Ok(Self::MeanLogits),
            "mean_probabilities" | "mean_probs" => Ok(Self::MeanProbabilities),
            other => Err(format!("unknown ensemble strategy {other:?}")),
        }
    }
}

/// Minimum max-softmax confidence for accepting a pseudo-label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    tau: f64,
}

impl ThresholdPolicy {
    pub fn new(tau: f64) -> Result<Self, EnsembleError> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(EnsembleError::InvalidThreshold(tau));
        }
        Ok(Self { tau })
    }

    /// `τ = 0`: every sample is accepted.
    pub fn accept_all() -> Self {
        Self { tau: 0.0 }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self::accept_all()
    }
}

/// Rows keyed by sample id (one-hot labels or logits from one source).
#[derive(Debug, Clone, PartialEq)]
pub struct SourceRows<S> {
    pub ids: Vec<u64>,
    pub values: Array2<S>,
}

impl<S: Scalar> SourceRows<S> {
    pub fn new(ids: Vec<u64>, values: Array2<S>) -> Self {
        debug_assert_eq!(ids.len(), values.nrows());
        Self { ids, values }
    }

    pub fn logits_of(outputs: &ModelOutputs<S>) -> Self {
        Self::new(outputs.ids.clone(), outputs.logits.clone())
    }

    /// Rows for `ids`, in that order.
    pub fn restrict(&self, ids: &[u64]) -> Result<Self, EnsembleError> {
        let index: HashMap<u64, usize> = self.ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let rows = ids
            .iter()
            .map(|id| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| EnsembleError::Misaligned(format!("sample {id} missing from source")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(ids.to_vec(), self.values.select(Axis(0), &rows)))
    }
}

/// Ensembled soft labels over the unlabeled pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet<S> {
    pub ids: Vec<u64>,
    pub soft: Array2<S>,
    pub source_count: usize,
    pub strategy: EnsembleStrategy,
}

impl<S: Scalar> PseudoLabelSet<S> {
    pub fn new(
        ids: Vec<u64>,
        soft: Array2<S>,
        source_count: usize,
        strategy: EnsembleStrategy,
    ) -> Result<Self, EnsembleError> {
        if ids.len() != soft.nrows() {
            return Err(EnsembleError::InvalidSoftLabels(format!(
                "{} ids for {} rows",
                ids.len(),
                soft.nrows()
            )));
        }
        for (row, values) in soft.rows().into_iter().enumerate() {
            let sum: f64 = values.iter().map(|v| v.as_f64()).sum();
            if values.iter().any(|v| !(v.as_f64() >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
                return Err(EnsembleError::InvalidSoftLabels(format!("row {row} sums to {sum}")));
            }
        }
        Ok(Self {
            ids,
            soft,
            source_count,
            strategy,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.soft.ncols()
    }

    /// Argmax of each soft row (ties to the lowest class).
    pub fn hard_labels(&self) -> Vec<usize> {
        self.soft.rows().into_iter().map(argmax).collect()
    }
}

/// Thresholded argmax pseudo-labels of one model over the unlabeled pool.
///
/// Returns the accepted ids and their one-hot rows. With `τ = 0` every
/// sample is accepted.
pub fn pseudo_label<S: Scalar>(outputs: &ModelOutputs<S>, policy: &ThresholdPolicy) -> SourceRows<S> {
    let classes = outputs.class_count();
    let tau = policy.tau();
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (row, &id) in outputs.logits.rows().into_iter().zip(&outputs.ids) {
        let p = softmax(row);
        let top = argmax(p.view());
        if p[top].as_f64() >= tau {
            ids.push(id);
            labels.push(top);
        }
    }
    let mut one_hot = Array2::zeros((ids.len(), classes));
    for (i, &l) in labels.iter().enumerate() {
        one_hot[[i, l]] = S::one();
    }
    SourceRows::new(ids, one_hot)
}

fn check_aligned<S: Scalar>(sources: &[SourceRows<S>]) -> Result<&SourceRows<S>, EnsembleError> {
    let first = sources.first().ok_or(EnsembleError::NoSources)?;
    for (i, s) in sources.iter().enumerate().skip(1) {
        if s.values.dim() != first.values.dim() {
            return Err(EnsembleError::Misaligned(format!(
                "source {i} has shape {:?}, source 0 has {:?}",
                s.values.dim(),
                first.values.dim()
            )));
        }
        if s.ids != first.ids {
            return Err(EnsembleError::Misaligned(format!("source {i} has a different id order")));
        }
    }
    Ok(first)
}

fn mean_of<S: Scalar>(sources: &[SourceRows<S>]) -> Array2<S> {
    let mut total = Array2::<S>::zeros(sources[0].values.raw_dim());
    for s in sources {
        total += &s.values;
    }
    total / S::lit(sources.len() as f64)
}

/// Element-wise mean of one-hot label matrices.
pub fn ensemble_mean_labels<S: Scalar>(sources: &[SourceRows<S>]) -> Result<PseudoLabelSet<S>, EnsembleError> {
    let first = check_aligned(sources)?;
    for (source_index, s) in sources.iter().enumerate() {
        for (row, values) in s.values.rows().into_iter().enumerate() {
            let ones = values.iter().filter(|&&v| v == S::one()).count();
            let zeros = values.iter().filter(|&&v| v == S::zero()).count();
            if ones != 1 || ones + zeros != values.len() {
                return Err(EnsembleError::NotOneHot { source_index, row });
            }
        }
    }
    PseudoLabelSet::new(first.ids.clone(), mean_of(sources), sources.len(), EnsembleStrategy::MeanLabels)
}

/// Softmax of the element-wise mean of logits.
pub fn ensemble_mean_logits<S: Scalar>(sources: &[SourceRows<S>]) -> Result<PseudoLabelSet<S>, EnsembleError> {
    let first = check_aligned(sources)?;
    let soft = softmax_rows(mean_of(sources).view());
    PseudoLabelSet::new(first.ids.clone(), soft, sources.len(), EnsembleStrategy::MeanLogits)
}

/// Element-wise mean of per-source softmax probabilities.
pub fn ensemble_mean_probs<S: Scalar>(sources: &[SourceRows<S>]) -> Result<PseudoLabelSet<S>, EnsembleError> {
    let first = check_aligned(sources)?;
    let probs: Vec<SourceRows<S>> = sources
        .iter()
        .map(|s| SourceRows::new(s.ids.clone(), softmax_rows(s.values.view())))
        .collect();
    PseudoLabelSet::new(
        first.ids.clone(),
        mean_of(&probs),
        sources.len(),
        EnsembleStrategy::MeanProbabilities,
    )
}

/// Thresholds every model's outputs and ensembles them with `strategy`.
///
/// When `τ > 0`, only samples accepted by every source are kept so that the
/// sources stay aligned.
pub fn ensemble_outputs<S: Scalar>(
    outputs: &[&ModelOutputs<S>],
    strategy: EnsembleStrategy,
    policy: &ThresholdPolicy,
) -> Result<PseudoLabelSet<S>, EnsembleError> {
    if outputs.is_empty() {
        return Err(EnsembleError::NoSources);
    }
    let labels: Vec<SourceRows<S>> = outputs.iter().map(|o| pseudo_label(o, policy)).collect();
    let mut accepted: Vec<u64> = outputs[0].ids.clone();
    for l in &labels {
        let keep: std::collections::HashSet<u64> = l.ids.iter().copied().collect();
        accepted.retain(|id| keep.contains(id));
    }
    match strategy {
        EnsembleStrategy::MeanLabels => {
            let aligned = labels
                .iter()
                .map(|l| l.restrict(&accepted))
                .collect::<Result<Vec<_>, _>>()?;
            ensemble_mean_labels(&aligned)
        }
        EnsembleStrategy::MeanLogits | EnsembleStrategy::MeanProbabilities => {
            let aligned = outputs
                .iter()
                .map(|o| SourceRows::logits_of(o).restrict(&accepted))
                .collect::<Result<Vec<_>, _>>()?;
            if strategy == EnsembleStrategy::MeanLogits {
                ensemble_mean_logits(&aligned)
            } else {
                ensemble_mean_probs(&aligned)
            }
        }
    }
}

/// Per-row natural-log Shannon entropy (`0 ln 0 = 0`) and its mean.
pub fn entropy_profile<S: Scalar>(probabilities: ArrayView2<'_, S>) -> (Vec<f64>, f64) {
    let per_row: Vec<f64> = probabilities
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .map(|p| p.as_f64())
                .filter(|&p| p > 0.0)
                .map(|p| -p * p.ln())
                .sum()
        })
        .collect();
    let mean = if per_row.is_empty() {
        0.0
    } else {
        per_row.iter().sum::<f64>() / per_row.len() as f64
    };
    (per_row, mean)
}

/// Fraction of pseudo-labels whose argmax equals the hidden true label.
/// Diagnostic only.
pub fn pseudo_label_accuracy<S: Scalar>(
    pseudo: &PseudoLabelSet<S>,
    truth: &HiddenLabels,
) -> Result<f64, EnsembleError> {
    top_confidence_accuracy(pseudo, truth, 1.0)
}

/// Pseudo-label accuracy restricted to the `fraction` of samples with the
/// highest max-probability (ties by position). Diagnostic only.
pub fn top_confidence_accuracy<S: Scalar>(
    pseudo: &PseudoLabelSet<S>,
    truth: &HiddenLabels,
    fraction: f64,
) -> Result<f64, EnsembleError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EnsembleError::InvalidSoftLabels(format!("fraction {fraction} outside (0, 1]")));
    }
    let (ids, labels) = truth.reveal();
    let index: HashMap<u64, usize> = ids.iter().enumerate().map(|(i, &id)| (id, labels[i])).collect();
    let predicted = pseudo.hard_labels();
    let mut order: Vec<usize> = (0..pseudo.len()).collect();
    if fraction < 1.0 {
        let confidence: Vec<f64> = pseudo
            .soft
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        order.sort_by(|&a, &b| confidence[b].total_cmp(&confidence[a]));
    }
    let keep = ((pseudo.len() as f64 * fraction).ceil() as usize).min(pseudo.len());
    if keep == 0 {
        return Ok(0.0);
    }
    let mut hits = 0;
    for &i in &order[..keep] {
        let id = pseudo.ids[i];
        let label = index
            .get(&id)
            .ok_or_else(|| EnsembleError::Misaligned(format!("no hidden label for sample {id}")))?;
        if *label == predicted[i] {
            hits += 1;
        }
    }
    Ok(hits as f64 / keep as f64)
}

/// Writes soft labels as an EMB1 container (empty feature block, ids and a
/// soft-label block) plus a manifest recording the strategy.
pub fn write_pseudo_label_file<S: Scalar>(
    pseudo: &PseudoLabelSet<S>,
    path: impl AsRef<Path>,
) -> Result<(), FormatError> {
    let record = Emb1Record {
        features: Array2::zeros((pseudo.len(), 0)),
        class_count: pseudo.class_count() as u32,
        labels: None,
        ids: Some(pseudo.ids.clone()),
        soft: Some(pseudo.soft.mapv(Scalar::as_f32)),
    };
    std::fs::write(path.as_ref(), record.encode())?;
    Manifest {
        dataset_name: path
            .as_ref()
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        strategy: Some(pseudo.strategy.name().to_string()),
        source_count: Some(pseudo.source_count),
        ..Default::default()
    }
    .write(path)
}

pub fn read_pseudo_label_file<S: Scalar>(path: impl AsRef<Path>) -> Result<PseudoLabelSet<S>, FormatError> {
    let record = Emb1Record::decode(&std::fs::read(path.as_ref())?)?;
    let manifest = Manifest::read(path.as_ref())?;
    let soft = record
        .soft
        .ok_or_else(|| FormatError::InvalidHeader("no soft-label block".into()))?;
    let ids = record
        .ids
        .unwrap_or_else(|| (0..soft.nrows() as u64).collect());
    let strategy = manifest
        .strategy
        .as_deref()
        .unwrap_or("mean_labels")
        .parse()
        .map_err(FormatError::InvalidHeader)?;
    PseudoLabelSet::new(ids, soft.mapv(S::of_f32), manifest.source_count.unwrap_or(1), strategy)
        .map_err(|e| FormatError::InvalidHeader(e.to_string()))
}
