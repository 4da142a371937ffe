//! Agreement between two labelings of the same samples: AMI, ARI,
//! V-Measure and Fowlkes–Mallows.

use std::collections::BTreeMap;

use super::Score;
use crate::error::ValidatorError;

/// Contingency table of two labelings with compacted label indices.
///
/// Rows follow the sorted distinct values of `a`, columns those of `b`.
#[derive(Debug, Clone)]
pub struct Contingency {
    pub n: u64,
    pub table: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut index = BTreeMap::new();
    for &l in labels {
        index.entry(l).or_insert(0usize);
    }
    for (i, v) in index.values_mut().enumerate() {
        *v = i;
    }
    (labels.iter().map(|l| index[l]).collect(), index.len())
}

impl Contingency {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self, ValidatorError> {
        if a.len() != b.len() {
            return Err(ValidatorError::LengthMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        let (ra, ka) = compact(a);
        let (rb, kb) = compact(b);
        let mut table = vec![vec![0u64; kb]; ka];
        for (&i, &j) in ra.iter().zip(&rb) {
            table[i][j] += 1;
        }
        let row_sums = table.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            n: a.len() as u64,
            table,
            row_sums,
            col_sums,
        })
    }

    /// True when both labelings induce the same partition.
    pub fn same_partition(&self) -> bool {
        self.row_sums.len() == self.col_sums.len()
            && self.table.iter().all(|r| r.iter().filter(|&&c| c > 0).count() == 1)
    }

    /// Mutual information in nats.
    pub fn mutual_information(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let n = self.n as f64;
        let ln_n = n.ln();
        let mut mi = 0.0;
        for (i, row) in self.table.iter().enumerate() {
            for (j, &nij) in row.iter().enumerate() {
                if nij == 0 {
                    continue;
                }
                let nij = nij as f64;
                let log_ratio =
                    nij.ln() - (self.row_sums[i] as f64).ln() - (self.col_sums[j] as f64).ln() + ln_n;
                mi += nij / n * log_ratio;
            }
        }
        mi
    }

    /// `Σ C(count, 2)` over table cells, row sums and column sums.
    fn pair_sums(&self) -> (u128, u128, u128) {
        let c2 = |x: u64| u128::from(x) * u128::from(x.saturating_sub(1)) / 2;
        let cells = self.table.iter().flatten().map(|&x| c2(x)).sum();
        let rows = self.row_sums.iter().map(|&x| c2(x)).sum();
        let cols = self.col_sums.iter().map(|&x| c2(x)).sum();
        (cells, rows, cols)
    }
}

/// Entropy of one labeling, computed as its mutual information with itself
/// so that `MI(a, a) == H(a)` holds bit-for-bit.
fn entropy(labels: &[usize]) -> f64 {
    Contingency::new(labels, labels)
        .expect("equal lengths")
        .mutual_information()
}

/// Expected mutual information under the permutation (hypergeometric)
/// model with fixed marginals.
pub fn expected_mutual_information(c: &Contingency) -> f64 {
    let n = c.n as usize;
    if n == 0 {
        return 0.0;
    }
    let mut ln_fact = vec![0.0_f64; n + 1];
    for k in 1..=n {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let nf = n as f64;
    let mut emi = 0.0;
    for &ai in &c.row_sums {
        let ai = ai as usize;
        for &bj in &c.col_sums {
            let bj = bj as usize;
            let lo = (ai + bj).saturating_sub(n).max(1);
            let hi = ai.min(bj);
            let fixed = ln_fact[ai] + ln_fact[bj] + ln_fact[n - ai] + ln_fact[n - bj] - ln_fact[n];
            for nij in lo..=hi {
                let ln_p = fixed
                    - ln_fact[nij]
                    - ln_fact[ai - nij]
                    - ln_fact[bj - nij]
                    - ln_fact[n + nij - ai - bj];
                let x = nij as f64;
                let term = x / nf * (nf * x / (ai as f64 * bj as f64)).ln();
                emi += term * ln_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information with arithmetic-mean normalisation.
///
/// Returns 0 when the normaliser `mean(H(a), H(b)) - E[MI]` vanishes.
pub fn ami(a: &[usize], b: &[usize]) -> Result<f64, ValidatorError> {
    let c = Contingency::new(a, b)?;
    let mi = c.mutual_information();
    let emi = expected_mutual_information(&c);
    let mean_entropy = 0.5 * (entropy(a) + entropy(b));
    let denom = mean_entropy - emi;
    if denom.abs() < 1e-12 {
        // 0/0: identical all-singleton partitions are a perfect match
        return Ok(if c.same_partition() && c.row_sums.len() > 1 { 1.0 } else { 0.0 });
    }
    Ok((mi - emi) / denom)
}

/// Adjusted Rand index from exact integer pair counts.
///
/// Undefined for fewer than two samples. When both partitions are trivial
/// of the same kind (all-one-cluster or all-singletons) they are identical
/// and the index is 1.
pub fn ari(a: &[usize], b: &[usize]) -> Result<Score, ValidatorError> {
    let c = Contingency::new(a, b)?;
    if c.n < 2 {
        return Ok(Score::Undefined("fewer than two samples"));
    }
    let total = u128::from(c.n) * u128::from(c.n - 1) / 2;
    let (index, sa, sb) = c.pair_sums();
    let (total, index, sa, sb) = (total as i128, index as i128, sa as i128, sb as i128);
    let numerator = 2 * total * index - 2 * sa * sb;
    let denominator = total * (sa + sb) - 2 * sa * sb;
    if denominator == 0 {
        return Ok(Score::Value(1.0));
    }
    Ok(Score::Value(numerator as f64 / denominator as f64))
}

/// Harmonic mean of homogeneity and completeness.
pub fn v_measure(a: &[usize], b: &[usize]) -> Result<f64, ValidatorError> {
    let c = Contingency::new(a, b)?;
    let mi = c.mutual_information();
    let (ha, hb) = (entropy(a), entropy(b));
    let homogeneity = if ha == 0.0 { 1.0 } else { 1.0 - (ha - mi) / ha };
    let completeness = if hb == 0.0 { 1.0 } else { 1.0 - (hb - mi) / hb };
    if homogeneity + completeness == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * homogeneity * completeness / (homogeneity + completeness))
}

/// Fowlkes–Mallows index `sqrt(TP/(TP+FP) · TP/(TP+FN))` over sample pairs;
/// 0 when either denominator is 0.
pub fn fmi(a: &[usize], b: &[usize]) -> Result<f64, ValidatorError> {
    let c = Contingency::new(a, b)?;
    let (tp, pa, pb) = c.pair_sums();
    if pa == 0 || pb == 0 {
        // no within-cluster pairs on one side; only identical singletons agree
        return Ok(if pa == pb && c.same_partition() { 1.0 } else { 0.0 });
    }
    let tp = tp as f64;
    Ok((tp / pa as f64).sqrt() * (tp / pb as f64).sqrt())
}
