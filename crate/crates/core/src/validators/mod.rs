//! Label-free model-selection criteria and rank aggregation.
//!
//! Every trained configuration is scored on the unlabeled validation set by
//! seven criteria: RankMe on the features, AMI / ARI / V-Measure / FMI
//! between predictions and a k-means clustering of the features,
//! Calinski–Harabasz on the features grouped by prediction, and the nuclear
//! norm of the softmax probabilities. Configurations are then ranked per
//! criterion and the lowest average rank wins. All criterion arithmetic is
//! done in `f64`.

mod agreement;
mod kmeans;
mod panel;
mod spectral;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ValidatorError;
use crate::heads::softmax_rows;
use crate::outputs::ModelOutputs;
use crate::scalar::Scalar;

pub use agreement::{ami, ari, expected_mutual_information, fmi, v_measure, Contingency};
pub use kmeans::{kmeans, ClusterAssignment, MAX_ITERATIONS as KMEANS_MAX_ITERATIONS};
pub use panel::{build_panel, competition_ranks, select_config, ScorePanel};
pub use spectral::{bnm, chi, rankme, DEFAULT_RANKME_EPSILON};

/// Outcome of one criterion. Higher values are better for all criteria.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Score {
    Value(f64),
    /// Larger than any finite value (e.g. CHI with zero within-group spread).
    Unbounded,
    /// Cannot be computed on this input; ranks last.
    Undefined(&'static str),
}

impl Score {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Score::Value(v) => Some(v),
            Score::Unbounded => Some(f64::INFINITY),
            Score::Undefined(_) => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        !matches!(self, Score::Undefined(_))
    }
}

impl From<f64> for Score {
    fn from(v: f64) -> Self {
        if v.is_finite() {
            Score::Value(v)
        } else if v == f64::INFINITY {
            Score::Unbounded
        } else {
            Score::Undefined("non-finite value")
        }
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Score::Value(v) => write!(f, "{v}"),
            Score::Unbounded => f.write_str("inf"),
            Score::Undefined(_) => f.write_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    RankMe,
    #[serde(rename = "AMI")]
    Ami,
    #[serde(rename = "ARI")]
    Ari,
    VMeasure,
    #[serde(rename = "FMI")]
    Fmi,
    #[serde(rename = "CHI")]
    Chi,
    #[serde(rename = "BNM")]
    Bnm,
}

impl Criterion {
    pub const ALL: [Criterion; 7] = [
        Criterion::RankMe,
        Criterion::Ami,
        Criterion::Ari,
        Criterion::VMeasure,
        Criterion::Fmi,
        Criterion::Chi,
        Criterion::Bnm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::RankMe => "RankMe",
            Criterion::Ami => "AMI",
            Criterion::Ari => "ARI",
            Criterion::VMeasure => "VMeasure",
            Criterion::Fmi => "FMI",
            Criterion::Chi => "CHI",
            Criterion::Bnm => "BNM",
        }
    }

    pub fn higher_is_better(self) -> bool {
        true
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidatorScore {
    pub criterion: Criterion,
    pub score: Score,
    pub higher_is_better: bool,
}

impl ValidatorScore {
    fn new(criterion: Criterion, score: Score) -> Self {
        Self {
            criterion,
            score,
            higher_is_better: criterion.higher_is_better(),
        }
    }
}

/// Knobs for [`score_model_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringOptions {
    /// k-means cluster count; `None` uses the class count.
    pub clusters: Option<usize>,
    pub rankme_epsilon: f64,
    pub seed: u64,
}

impl ScoringOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            clusters: None,
            rankme_epsilon: DEFAULT_RANKME_EPSILON,
            seed,
        }
    }
}

/// All seven criteria for one model's validation outputs, in
/// [`Criterion::ALL`] order.
pub fn score_model<S: Scalar>(
    outputs: &ModelOutputs<S>,
    class_count: usize,
    seed: u64,
) -> Result<Vec<ValidatorScore>, ValidatorError> {
    score_model_with(outputs, class_count, &ScoringOptions::new(seed))
}

pub fn score_model_with<S: Scalar>(
    outputs: &ModelOutputs<S>,
    class_count: usize,
    options: &ScoringOptions,
) -> Result<Vec<ValidatorScore>, ValidatorError> {
    let n = outputs.len();
    if outputs.features.nrows() != n || outputs.logits.nrows() != n || outputs.predictions.len() != n {
        return Err(ValidatorError::Shape(format!(
            "outputs disagree on sample count: ids {n}, features {}, logits {}, predictions {}",
            outputs.features.nrows(),
            outputs.logits.nrows(),
            outputs.predictions.len()
        )));
    }
    if n == 0 {
        return Err(ValidatorError::Empty("validation outputs"));
    }
    let k = options.clusters.unwrap_or(class_count);
    let predictions = &outputs.predictions;

    let rankme_score = rankme(outputs.features.view(), options.rankme_epsilon)?;
    let agreement = match kmeans(outputs.features.view(), k, options.seed) {
        Ok(clusters) => {
            let c = &clusters.assignments;
            [
                Score::Value(ami(predictions, c)?),
                ari(predictions, c)?,
                Score::Value(v_measure(predictions, c)?),
                Score::Value(fmi(predictions, c)?),
            ]
        }
        Err(ValidatorError::TooFewPoints { .. }) => [Score::Undefined("fewer points than clusters"); 4],
        Err(e) => return Err(e),
    };
    let chi_score = chi(outputs.features.view(), predictions)?;
    let probabilities = softmax_rows(outputs.logits.view());
    let bnm_score = Score::Value(bnm(probabilities.view())?);

    let scores = [
        rankme_score,
        agreement[0],
        agreement[1],
        agreement[2],
        agreement[3],
        chi_score,
        bnm_score,
    ];
    Ok(Criterion::ALL
        .iter()
        .zip(scores)
        .map(|(&c, s)| ValidatorScore::new(c, s))
        .collect())
}
