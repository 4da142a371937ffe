//! Rank-frequency summaries of accuracy tables.

use serde::{Deserialize, Serialize};

use crate::error::ValidatorError;
use crate::validators::{competition_ranks, Score};

/// `counts[i][j]`: number of settings in which method `i` ranked `j + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub methods: Vec<String>,
    pub counts: Vec<Vec<usize>>,
    pub mean_rank: Vec<f64>,
}

/// Competition-ranks methods within each setting (rank 1 = highest
/// accuracy) and tallies rank frequencies. `table` is settings × methods.
pub fn build_ranking_report(methods: Vec<String>, table: &[Vec<f64>]) -> Result<RankingReport, ValidatorError> {
    let k = methods.len();
    if k == 0 || table.is_empty() {
        return Err(ValidatorError::Empty("accuracy table"));
    }
    if let Some((row, r)) = table.iter().enumerate().find(|(_, r)| r.len() != k) {
        return Err(ValidatorError::Ragged {
            row,
            len: r.len(),
            expected: k,
        });
    }
    let mut counts = vec![vec![0usize; k]; k];
    let mut rank_sums = vec![0usize; k];
    for setting in table {
        let scores: Vec<Score> = setting.iter().map(|&v| Score::from(v)).collect();
        for (method, rank) in competition_ranks(&scores).into_iter().enumerate() {
            counts[method][rank - 1] += 1;
            rank_sums[method] += rank;
        }
    }
    let settings = table.len() as f64;
    Ok(RankingReport {
        methods,
        counts,
        mean_rank: rank_sums.iter().map(|&s| s as f64 / settings).collect(),
    })
}

impl RankingReport {
    /// `method,rank_1,...,rank_k,mean_rank`.
    pub fn to_csv(&self) -> String {
        let k = self.methods.len();
        let mut out = String::from("method");
        for j in 1..=k {
            out.push_str(&format!(",rank_{j}"));
        }
        out.push_str(",mean_rank\n");
        for (i, m) in self.methods.iter().enumerate() {
            out.push_str(m);
            for c in &self.counts[i] {
                out.push_str(&format!(",{c}"));
            }
            out.push_str(&format!(",{}\n", self.mean_rank[i]));
        }
        out
    }
}
