use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::scalar::Scalar;

/// Features, logits and argmax predictions of one model over one set.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutputs<S> {
    pub ids: Vec<u64>,
    pub features: Array2<S>,
    pub logits: Array2<S>,
    pub predictions: Vec<usize>,
}

impl<S: Scalar> ModelOutputs<S> {
    /// Builds outputs from features and logits, deriving predictions.
    pub fn from_logits(ids: Vec<u64>, features: Array2<S>, logits: Array2<S>) -> Self {
        let predictions = argmax_rows(logits.view());
        Self {
            ids,
            features,
            logits,
            predictions,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.logits.ncols()
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax<S: Scalar>(row: ArrayView1<'_, S>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn argmax_rows<S: Scalar>(m: ArrayView2<'_, S>) -> Vec<usize> {
    m.rows().into_iter().map(argmax).collect()
}

/// Fraction of positions where `predictions` equals `labels`.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(predictions.len(), labels.len(), "accuracy: length mismatch");
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}
