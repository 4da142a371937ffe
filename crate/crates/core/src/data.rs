//! Embedding sets and deterministic N-shot splits.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::scalar::Scalar;

/// Dense `n × d` feature matrix with optional class labels and stable ids.
///
/// Zero-row sets are allowed so that split partitions can be empty; every
/// other invariant (finite entries, labels below `class_count`, unique ids)
/// is checked on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet<S> {
    features: Array2<S>,
    labels: Option<Vec<usize>>,
    class_count: usize,
    ids: Vec<u64>,
}

impl<S: Scalar> EmbeddingSet<S> {
    pub fn new(
        features: Array2<S>,
        labels: Option<Vec<usize>>,
        class_count: usize,
        ids: Vec<u64>,
    ) -> Result<Self, DataError> {
        let (n, d) = features.dim();
        if d == 0 {
            return Err(DataError::ZeroDimension);
        }
        if ids.len() != n {
            return Err(DataError::LengthMismatch {
                what: "ids",
                expected: n,
                actual: ids.len(),
            });
        }
        if let Some((row, col)) = first_non_finite(features.view()) {
            return Err(DataError::NonFinite { row, col });
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(DataError::LengthMismatch {
                    what: "labels",
                    expected: n,
                    actual: labels.len(),
                });
            }
            if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= class_count)
            {
                return Err(DataError::LabelOutOfRange {
                    index,
                    label: label as i64,
                    class_count,
                });
            }
        }
        let mut seen = HashSet::with_capacity(n);
        if let Some(&dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(DataError::DuplicateId(dup));
        }
        Ok(Self {
            features,
            labels,
            class_count,
            ids,
        })
    }

    /// Builds a set with ids `0..n`.
    pub fn with_sequential_ids(
        features: Array2<S>,
        labels: Option<Vec<usize>>,
        class_count: usize,
    ) -> Result<Self, DataError> {
        let ids = (0..features.nrows() as u64).collect();
        Self::new(features, labels, class_count, ids)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, S> {
        self.features.view()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// Rows at `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), rows),
            labels: self
                .labels
                .as_ref()
                .map(|l| rows.iter().map(|&r| l[r]).collect()),
            class_count: self.class_count,
            ids: rows.iter().map(|&r| self.ids[r]).collect(),
        }
    }

    /// Rows whose ids are `ids`, in that order.
    pub fn select_ids(&self, ids: &[u64]) -> Result<Self, DataError> {
        let index = self.id_index();
        let rows = ids
            .iter()
            .map(|id| index.get(id).copied().ok_or(DataError::UnknownId(*id)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.select_rows(&rows))
    }

    pub fn without_labels(&self) -> Self {
        Self {
            labels: None,
            ..self.clone()
        }
    }

    /// Concatenates two sets with the same dimension and class count.
    pub fn concat(&self, other: &Self) -> Result<Self, DataError> {
        if self.dim() != other.dim() {
            return Err(DataError::LengthMismatch {
                what: "feature dimension",
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), other.features.view()])
            .expect("column counts checked");
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        let ids = self.ids.iter().chain(&other.ids).copied().collect();
        Self::new(features, labels, self.class_count.max(other.class_count), ids)
    }

    pub(crate) fn id_index(&self) -> HashMap<u64, usize> {
        self.ids.iter().enumerate().map(|(i, &id)| (id, i)).collect()
    }

    pub fn map_scalar<T: Scalar>(&self) -> EmbeddingSet<T> {
        EmbeddingSet {
            features: self.features.mapv(|x| T::lit(x.as_f64())),
            labels: self.labels.clone(),
            class_count: self.class_count,
            ids: self.ids.clone(),
        }
    }
}

fn first_non_finite<S: Scalar>(m: ArrayView2<'_, S>) -> Option<(usize, usize)> {
    m.indexed_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(idx, _)| idx)
}

/// True labels of a split partition that training code must not see.
///
/// Every call to [`HiddenLabels::reveal`] is counted so tests can assert
/// that only diagnostic paths read them. Clones share the counter.
#[derive(Debug, Clone)]
pub struct HiddenLabels {
    ids: Vec<u64>,
    labels: Vec<usize>,
    reads: Arc<AtomicUsize>,
}

impl HiddenLabels {
    pub fn new(ids: Vec<u64>, labels: Vec<usize>) -> Self {
        debug_assert_eq!(ids.len(), labels.len());
        Self {
            ids,
            labels,
            reads: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Ids and labels, for diagnostics only.
    pub fn reveal(&self) -> (&[u64], &[usize]) {
        self.reads.fetch_add(1, Ordering::SeqCst);
        (&self.ids, &self.labels)
    }

    /// Number of times [`reveal`](Self::reveal) has been called on this
    /// value or any clone of it.
    pub fn read_count(&self) -> usize {
        self.reads.load(Ordering::SeqCst)
    }
}

/// How to carve a labeled source into the four partitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub shots_per_class: usize,
    pub seed: u64,
    #[serde(default)]
    pub validation_fraction: f64,
    /// Fraction of the post-shot remainder held out as a labeled test set.
    #[serde(default)]
    pub test_fraction: f64,
}

impl SplitSpec {
    pub fn new(shots_per_class: usize, seed: u64) -> Self {
        Self {
            shots_per_class,
            seed,
            validation_fraction: 0.0,
            test_fraction: 0.0,
        }
    }

    pub fn with_validation_fraction(mut self, fraction: f64) -> Self {
        self.validation_fraction = fraction;
        self
    }

    pub fn with_test_fraction(mut self, fraction: f64) -> Self {
        self.test_fraction = fraction;
        self
    }
}

/// Labeled / unlabeled / validation / test partitions of one source.
#[derive(Debug, Clone)]
pub struct DatasetSplit<S> {
    pub labeled: EmbeddingSet<S>,
    /// Labels stripped; see [`DatasetSplit::unlabeled_truth`].
    pub unlabeled: EmbeddingSet<S>,
    pub validation: EmbeddingSet<S>,
    pub test: EmbeddingSet<S>,
    unlabeled_truth: HiddenLabels,
}

impl<S: Scalar> DatasetSplit<S> {
    pub fn unlabeled_truth(&self) -> &HiddenLabels {
        &self.unlabeled_truth
    }

    /// Applies the same id partition to another view of the same samples.
    ///
    /// `other` must carry labels identical to this split's source for every
    /// shared id.
    pub fn project<T: Scalar>(&self, other: &EmbeddingSet<T>) -> Result<DatasetSplit<T>, DataError> {
        let other_labels = other.labels().ok_or(DataError::MissingLabels)?;
        let index = other.id_index();
        let pick = |part: &EmbeddingSet<S>, truth: Option<&[usize]>| -> Result<EmbeddingSet<T>, DataError> {
            let projected = other.select_ids(part.ids())?;
            let expected = truth.or(part.labels());
            if let Some(expected) = expected {
                for (id, &want) in part.ids().iter().zip(expected) {
                    let got = other_labels[index[id]];
                    if got != want {
                        return Err(DataError::MisalignedSources(format!(
                            "sample {id} has label {got} in one source and {want} in another"
                        )));
                    }
                }
            }
            Ok(projected)
        };
        let labeled = pick(&self.labeled, None)?;
        let unlabeled = pick(&self.unlabeled, Some(&self.unlabeled_truth.labels))?.without_labels();
        let validation = other.select_ids(self.validation.ids())?.without_labels();
        let test = pick(&self.test, None)?;
        Ok(DatasetSplit {
            labeled,
            unlabeled,
            validation,
            test,
            unlabeled_truth: self.unlabeled_truth.clone(),
        })
    }
}

/// Splits a labeled source into `N` shots per class plus stratified
/// validation and test holdouts; everything else becomes unlabeled.
///
/// Class members are shuffled with a per-class generator seeded by
/// `seed ^ class`. Validation and test sizes are `floor(fraction * R)` of the
/// post-shot remainder `R`, allocated per class by flooring and handing the
/// leftover slots to the lowest class indices.
pub fn make_split<S: Scalar>(
    source: &EmbeddingSet<S>,
    spec: &SplitSpec,
) -> Result<DatasetSplit<S>, DataError> {
    if source.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let labels = source.labels().ok_or(DataError::MissingLabels)?;
    let fractions_ok = (0.0..1.0).contains(&spec.validation_fraction)
        && (0.0..1.0).contains(&spec.test_fraction)
        && spec.validation_fraction + spec.test_fraction < 1.0;
    if !fractions_ok || spec.shots_per_class == 0 {
        return Err(DataError::InvalidSplitSpec(format!(
            "shots={} validation_fraction={} test_fraction={}",
            spec.shots_per_class, spec.validation_fraction, spec.test_fraction
        )));
    }
    let classes = source.class_count();
    let shots = spec.shots_per_class;

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (row, &label) in labels.iter().enumerate() {
        members[label].push(row);
    }
    for (class, rows) in members.iter_mut().enumerate() {
        if rows.len() < shots {
            return Err(DataError::InsufficientShots {
                class,
                available: rows.len(),
                required: shots,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ class as u64);
        rows.shuffle(&mut rng);
    }

    let remainders: Vec<usize> = members.iter().map(|m| m.len() - shots).collect();
    let no_caps = vec![0; classes];
    let validation_counts = stratified_counts(&remainders, &no_caps, spec.validation_fraction);
    let test_counts = stratified_counts(&remainders, &validation_counts, spec.test_fraction);

    let (mut labeled, mut validation, mut test, mut unlabeled) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (class, rows) in members.iter().enumerate() {
        let v_end = shots + validation_counts[class];
        let t_end = v_end + test_counts[class];
        labeled.extend_from_slice(&rows[..shots]);
        validation.extend_from_slice(&rows[shots..v_end]);
        test.extend_from_slice(&rows[v_end..t_end]);
        unlabeled.extend_from_slice(&rows[t_end..]);
    }
    for part in [&mut labeled, &mut validation, &mut test, &mut unlabeled] {
        part.sort_unstable();
    }

    let unlabeled_set = source.select_rows(&unlabeled);
    let truth = HiddenLabels::new(
        unlabeled_set.ids().to_vec(),
        unlabeled_set.labels().expect("source is labeled").to_vec(),
    );
    Ok(DatasetSplit {
        labeled: source.select_rows(&labeled),
        unlabeled: unlabeled_set.without_labels(),
        validation: source.select_rows(&validation).without_labels(),
        test: source.select_rows(&test),
        unlabeled_truth: truth,
    })
}

/// Per-class counts summing to `floor(fraction * Σ remainders)`, never
/// exceeding `remainder - already_taken` for any class.
fn stratified_counts(remainders: &[usize], already_taken: &[usize], fraction: f64) -> Vec<usize> {
    let total_remainder: usize = remainders.iter().sum();
    // guard against 0.1 * 30 = 2.9999999999999996
    let floor_frac = |x: usize| (fraction * x as f64 + 1e-9).floor() as usize;
    let target = floor_frac(total_remainder);
    let mut counts: Vec<usize> = remainders
        .iter()
        .zip(already_taken)
        .map(|(&r, &t)| floor_frac(r).min(r - t))
        .collect();
    let mut leftover = target.saturating_sub(counts.iter().sum());
    while leftover > 0 {
        let mut progressed = false;
        for class in 0..counts.len() {
            if leftover == 0 {
                break;
            }
            if counts[class] + already_taken[class] < remainders[class] {
                counts[class] += 1;
                leftover -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    counts
}
