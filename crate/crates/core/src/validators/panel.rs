use std::cmp::Ordering;

use super::{Criterion, Score};
use crate::error::ValidatorError;

/// Score matrix `M` (configs × criteria), its per-column rank matrix `R`
/// and the average-rank vector `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePanel {
    pub configs: Vec<String>,
    pub criteria: Vec<Criterion>,
    pub scores: Vec<Vec<Score>>,
    pub ranks: Vec<Vec<usize>>,
    pub average_rank: Vec<f64>,
}

/// Orders scores best-first; `None` for undefined entries.
fn compare_desc(a: &Score, b: &Score) -> Option<Ordering> {
    let (x, y) = (a.value()?, b.value()?);
    y.partial_cmp(&x)
}

/// Competition ("1224") ranks, rank 1 = highest score. Undefined entries
/// all receive the worst rank `len`.
pub fn competition_ranks(column: &[Score]) -> Vec<usize> {
    let h = column.len();
    column
        .iter()
        .map(|s| {
            if !s.is_defined() {
                return h;
            }
            1 + column
                .iter()
                .filter(|other| compare_desc(other, s) == Some(Ordering::Less))
                .count()
        })
        .collect()
}

/// Ranks each criterion column and averages ranks per configuration.
pub fn build_panel(
    configs: Vec<String>,
    criteria: Vec<Criterion>,
    scores: Vec<Vec<Score>>,
) -> Result<ScorePanel, ValidatorError> {
    if scores.is_empty() || criteria.is_empty() {
        return Err(ValidatorError::Empty("score panel"));
    }
    if configs.len() != scores.len() {
        return Err(ValidatorError::Ragged {
            row: configs.len().min(scores.len()),
            len: configs.len(),
            expected: scores.len(),
        });
    }
    if let Some((row, r)) = scores.iter().enumerate().find(|(_, r)| r.len() != criteria.len()) {
        return Err(ValidatorError::Ragged {
            row,
            len: r.len(),
            expected: criteria.len(),
        });
    }
    let h = scores.len();
    let mut ranks = vec![vec![0; criteria.len()]; h];
    for col in 0..criteria.len() {
        let column: Vec<Score> = scores.iter().map(|r| r[col]).collect();
        for (row, rank) in competition_ranks(&column).into_iter().enumerate() {
            ranks[row][col] = rank;
        }
    }
    let average_rank = ranks
        .iter()
        .map(|r| r.iter().sum::<usize>() as f64 / r.len() as f64)
        .collect();
    Ok(ScorePanel {
        configs,
        criteria,
        scores,
        ranks,
        average_rank,
    })
}

/// Index of the lowest average rank; ties go to the lowest index.
pub fn select_config(panel: &ScorePanel) -> usize {
    let mut best = 0;
    for (i, &a) in panel.average_rank.iter().enumerate().skip(1) {
        if a < panel.average_rank[best] {
            best = i;
        }
    }
    best
}

impl ScorePanel {
    pub fn selected(&self) -> &str {
        &self.configs[select_config(self)]
    }

    /// Long-format CSV: `config,criterion,score,rank`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("config,criterion,score,rank\n");
        for (i, config) in self.configs.iter().enumerate() {
            for (j, criterion) in self.criteria.iter().enumerate() {
                out.push_str(&format!("{config},{criterion},{},{}\n", self.scores[i][j], self.ranks[i][j]));
            }
        }
        out
    }

    /// Summary CSV: `config,average_rank,selected`.
    pub fn summary_csv(&self) -> String {
        let chosen = select_config(self);
        let mut out = String::from("config,average_rank,selected\n");
        for (i, config) in self.configs.iter().enumerate() {
            out.push_str(&format!("{config},{},{}\n", self.average_rank[i], i == chosen));
        }
        out
    }
}
