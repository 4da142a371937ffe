//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the summary is always printed.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use ndarray::{array, Array2};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vpet_core::data::{make_split, EmbeddingSet, SplitSpec};
use vpet_core::ensemble::{
    ensemble_mean_labels, ensemble_mean_logits, ensemble_mean_probs, entropy_profile, SourceRows,
};
use vpet_core::error::FormatError;
use vpet_core::format::Emb1Record;
use vpet_core::heads::{forward, loss_gradient, Architecture, HeadConfig, HeadModel, Layer};
use vpet_core::outputs::accuracy;
use vpet_core::pipeline::{run_hyperparameter_sweep, run_vpet_with_sources, ExperimentConfig, PairId, SourceSpec};
use vpet_core::synthetic::{benchmark_heads, benchmark_split, diverse_views, SyntheticSpec};
use vpet_core::validators::{
    ami, ari, bnm, build_panel, chi, fmi, rankme, select_config, v_measure, Criterion, Score,
    DEFAULT_RANKME_EPSILON,
};
use vpet_core::ensemble::EnsembleStrategy;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

// ---------------------------------------------------------------------------
// independent oracles

fn pair_counts(a: &[usize], b: &[usize]) -> (i128, i128, i128, i128) {
    let (mut both, mut only_a, mut only_b, mut neither) = (0, 0, 0, 0);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => both += 1,
                (true, false) => only_a += 1,
                (false, true) => only_b += 1,
                (false, false) => neither += 1,
            }
        }
    }
    (both, only_a, only_b, neither)
}

fn ratio(num: i128, den: i128) -> f64 {
    BigRational::new(BigInt::from(num), BigInt::from(den)).to_f64().unwrap()
}

/// Hubert–Arabie pair-counting form.
fn ari_oracle(a: &[usize], b: &[usize]) -> f64 {
    let (n11, n10, n01, n00) = pair_counts(a, b);
    let num = 2 * (n11 * n00 - n10 * n01);
    let den = (n11 + n10) * (n10 + n00) + (n11 + n01) * (n01 + n00);
    if den == 0 {
        1.0
    } else {
        ratio(num, den)
    }
}

fn fmi_oracle(a: &[usize], b: &[usize]) -> f64 {
    let (n11, n10, n01, _) = pair_counts(a, b);
    let (pa, pb) = (n11 + n10, n11 + n01);
    if pa == 0 && pb == 0 {
        return 1.0;
    }
    if pa == 0 || pb == 0 {
        return 0.0;
    }
    (ratio(n11, pa) * ratio(n11, pb)).sqrt()
}

fn counts(labels: &[usize]) -> BTreeMap<usize, u64> {
    let mut m = BTreeMap::new();
    for &l in labels {
        *m.entry(l).or_insert(0) += 1;
    }
    m
}

fn joint(a: &[usize], b: &[usize]) -> BTreeMap<(usize, usize), u64> {
    let mut m = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *m.entry((x, y)).or_insert(0) += 1;
    }
    m
}

fn entropy_of(c: &BTreeMap<usize, u64>, n: f64) -> f64 {
    c.values().map(|&k| k as f64 / n).map(|p| -p * p.ln()).sum()
}

/// `H(X | Y)` from joint counts.
fn conditional_entropy(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let cb = counts(b);
    joint(a, b)
        .iter()
        .map(|(&(_, y), &k)| -(k as f64 / n) * (k as f64 / cb[&y] as f64).ln())
        .sum()
}

fn v_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let (ha, hb) = (entropy_of(&counts(a), n), entropy_of(&counts(b), n));
    let h = if ha == 0.0 { 1.0 } else { 1.0 - conditional_entropy(a, b) / ha };
    let c = if hb == 0.0 { 1.0 } else { 1.0 - conditional_entropy(b, a) / hb };
    if h + c == 0.0 {
        0.0
    } else {
        2.0 * h * c / (h + c)
    }
}

fn mi_of_table(table: &[Vec<u64>], n: u64) -> f64 {
    let rows: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..table[0].len()).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let n = n as f64;
    let mut mi = 0.0;
    for (i, r) in table.iter().enumerate() {
        for (j, &k) in r.iter().enumerate() {
            if k > 0 {
                let k = k as f64;
                mi += k / n * (k * n / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    mi
}

fn factorial(k: u64) -> BigInt {
    (1..=k).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

/// Every contingency table with the given margins.
fn tables(rows: &[u64], cols: &[u64]) -> Vec<Vec<Vec<u64>>> {
    fn fill(
        cell: usize,
        rows: &[u64],
        col_left: &mut Vec<u64>,
        row_left: &mut Vec<u64>,
        t: &mut Vec<Vec<u64>>,
        out: &mut Vec<Vec<Vec<u64>>>,
    ) {
        let kc = col_left.len();
        if cell == rows.len() * kc {
            if row_left.iter().all(|&r| r == 0) && col_left.iter().all(|&c| c == 0) {
                out.push(t.clone());
            }
            return;
        }
        let (i, j) = (cell / kc, cell % kc);
        let hi = row_left[i].min(col_left[j]);
        let lo = if j == kc - 1 { row_left[i] } else { 0 };
        if lo > hi {
            return;
        }
        for v in lo..=hi {
            t[i][j] = v;
            row_left[i] -= v;
            col_left[j] -= v;
            fill(cell + 1, rows, col_left, row_left, t, out);
            row_left[i] += v;
            col_left[j] += v;
        }
        t[i][j] = 0;
    }
    let mut out = Vec::new();
    let mut t = vec![vec![0; cols.len()]; rows.len()];
    fill(0, rows, &mut cols.to_vec(), &mut rows.to_vec(), &mut t, &mut out);
    out
}

/// AMI with `E[MI]` summed over all tables with the observed margins,
/// weighted by their exact (rational) hypergeometric probability.
fn ami_oracle(a: &[usize], b: &[usize]) -> Result<f64, String> {
    let n = a.len() as u64;
    let rows: Vec<u64> = counts(a).into_values().collect();
    let cols: Vec<u64> = counts(b).into_values().collect();
    let margins: BigInt = rows.iter().chain(&cols).map(|&k| factorial(k)).product();
    let n_fact = factorial(n);
    let mut total = BigRational::zero();
    let mut emi = 0.0;
    for t in tables(&rows, &cols) {
        let cells: BigInt = t.iter().flatten().map(|&k| factorial(k)).product();
        let p = BigRational::new(margins.clone(), &n_fact * cells);
        emi += p.to_f64().unwrap() * mi_of_table(&t, n);
        total += p;
    }
    if total != BigRational::one() {
        return Err(format!("table probabilities sum to {total}"));
    }
    let observed = joint(a, b);
    let nf = n as f64;
    let (ca, cb) = (counts(a), counts(b));
    let mi: f64 = observed
        .iter()
        .map(|(&(x, y), &k)| k as f64 / nf * (k as f64 * nf / (ca[&x] as f64 * cb[&y] as f64)).ln())
        .sum();
    let mean_h = 0.5 * (entropy_of(&ca, nf) + entropy_of(&cb, nf));
    let den = mean_h - emi;
    if den.abs() < 1e-12 {
        let same = ca.len() == cb.len() && observed.len() == ca.len();
        return Ok(if same && ca.len() > 1 { 1.0 } else { 0.0 });
    }
    Ok((mi - emi) / den)
}

/// Singular values as the non-negative eigenvalues of `[[0, X], [Xᵀ, 0]]`.
fn singular_values_oracle(x: &Array2<f64>) -> Vec<f64> {
    let (m, n) = x.dim();
    let mut jw = DMatrix::<f64>::zeros(m + n, m + n);
    for i in 0..m {
        for j in 0..n {
            jw[(i, m + j)] = x[[i, j]];
            jw[(m + j, i)] = x[[i, j]];
        }
    }
    let mut eig: Vec<f64> = jw.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig.truncate(m.min(n));
    eig.into_iter().map(|v| v.max(0.0)).collect()
}

fn rankme_oracle(x: &Array2<f64>, eps: f64) -> f64 {
    let s = singular_values_oracle(x);
    let total: f64 = s.iter().sum();
    let p: Vec<f64> = s.iter().map(|v| v / total + eps).collect();
    let z: f64 = p.iter().sum();
    (-p.iter().map(|v| v / z).filter(|&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()).exp()
}

/// `tr(B)/tr(W) · (n − k)/(k − 1)` with scatter matrices built explicitly.
fn chi_oracle(x: &Array2<f64>, groups: &[usize]) -> Option<f64> {
    let (n, d) = x.dim();
    let m = DMatrix::from_fn(n, d, |i, j| x[[i, j]]);
    let mean = m.row_mean();
    let ids: Vec<usize> = counts(groups).into_keys().collect();
    let k = ids.len();
    let mut b = DMatrix::<f64>::zeros(d, d);
    let mut w = DMatrix::<f64>::zeros(d, d);
    for g in &ids {
        let members: Vec<usize> = (0..n).filter(|&i| groups[i] == *g).collect();
        let sub = m.select_rows(&members);
        let c = sub.row_mean();
        let diff = (&c - &mean).transpose();
        b += &diff * diff.transpose() * members.len() as f64;
        for i in 0..members.len() {
            let r = (sub.row(i) - &c).transpose();
            w += &r * r.transpose();
        }
    }
    if k < 2 || n <= k || w.trace() == 0.0 {
        return None;
    }
    Some(b.trace() / w.trace() * (n - k) as f64 / (k - 1) as f64)
}

fn close(a: f64, b: f64, abs: f64) -> bool {
    (a - b).abs() <= abs
}

fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

// ---------------------------------------------------------------------------
// criteria

fn criterion_1() -> Check {
    ensure!(ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap() == Score::Value(-0.5), "fixed ARI case");
    ensure!(
        chi(array![[0.0], [1.0], [10.0], [11.0]].view(), &[0, 0, 1, 1]).unwrap() == Score::Value(200.0),
        "fixed CHI case"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = [0.0f64; 7];
    for instance in 0..200 {
        let n = rng.random_range(2..=12);
        let (ca, cb) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..ca)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..cb)).collect();

        let checks = [
            (ami(&a, &b).unwrap(), ami_oracle(&a, &b)?),
            (ari(&a, &b).unwrap().value().unwrap(), ari_oracle(&a, &b)),
            (v_measure(&a, &b).unwrap(), v_oracle(&a, &b)),
            (fmi(&a, &b).unwrap(), fmi_oracle(&a, &b)),
        ];
        for (i, (got, want)) in checks.iter().enumerate() {
            worst[i] = worst[i].max((got - want).abs());
            ensure!(close(*got, *want, 1e-9), "instance {instance} {:?}: {got} vs oracle {want} ({a:?}, {b:?})", Criterion::ALL[i + 1]);
        }

        let d = rng.random_range(1..=5);
        let mut x = Array2::from_shape_fn((n, d), |_| rng.random_range(-3.0..3.0));
        if instance % 5 == 0 && n > 1 {
            let row = x.row(0).to_owned();
            x.row_mut(n - 1).assign(&(&row * 2.0));
        }
        match (chi(x.view(), &a).unwrap(), chi_oracle(&x, &a)) {
            (Score::Value(got), Some(want)) => {
                worst[4] = worst[4].max((got - want).abs() / want.abs());
                ensure!(rel_close(got, want, 1e-9), "instance {instance} CHI {got} vs {want}");
            }
            (Score::Undefined(_), None) | (Score::Unbounded, None) => {}
            (got, want) => return Err(format!("instance {instance} CHI {got:?} vs oracle {want:?}")),
        }

        let got = rankme(x.view(), DEFAULT_RANKME_EPSILON).unwrap().value().unwrap();
        let want = rankme_oracle(&x, DEFAULT_RANKME_EPSILON);
        worst[5] = worst[5].max((got - want).abs() / want);
        ensure!(rel_close(got, want, 1e-9), "instance {instance} RankMe {got} vs {want}");

        let c = rng.random_range(1..=4);
        let mut p = Array2::from_shape_fn((n, c), |_| rng.random_range(-4.0f64..4.0).exp());
        for mut row in p.rows_mut() {
            let s = row.sum();
            row /= s;
        }
        let got = bnm(p.view()).unwrap();
        let want: f64 = singular_values_oracle(&p).iter().sum();
        worst[6] = worst[6].max((got - want).abs() / want);
        ensure!(rel_close(got, want, 1e-9), "instance {instance} BNM {got} vs {want}");
    }
    Ok(format!(
        "200 instances; max deviation AMI {:.1e} ARI {:.1e} V {:.1e} FMI {:.1e} | rel CHI {:.1e} RankMe {:.1e} BNM {:.1e}",
        worst[0], worst[1], worst[2], worst[3], worst[4], worst[5], worst[6]
    ))
}

fn criterion_2() -> Check {
    let m = [[0.9, 0.2], [0.5, 0.8], [0.1, 0.4]];
    let scores: Vec<Vec<Score>> = m.iter().map(|r| r.iter().map(|&v| Score::Value(v)).collect()).collect();
    let names: Vec<String> = (0..3).map(|i| format!("c{i}")).collect();
    let panel = build_panel(names, Criterion::ALL[..2].to_vec(), scores).map_err(|e| e.to_string())?;
    ensure!(panel.average_rank == vec![2.0, 1.5, 2.5], "A = {:?}", panel.average_rank);
    ensure!(select_config(&panel) == 1, "selected {}", select_config(&panel));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let maps: [fn(f64) -> f64; 4] = [|v| 3.0 * v - 1.0, f64::exp, |v| v * v * v, |v| (v + 10.0).ln()];
    for trial in 0..100 {
        let configs = rng.random_range(1..=8);
        let criteria = rng.random_range(1..=7);
        let raw: Vec<Vec<Score>> = (0..configs)
            .map(|_| {
                (0..criteria)
                    .map(|_| match rng.random_range(0..10) {
                        0 => Score::Undefined("x"),
                        1 => Score::Value(0.5),
                        _ => Score::Value(rng.random_range(-5.0..5.0)),
                    })
                    .collect()
            })
            .collect();
        let map_ids: Vec<usize> = (0..criteria).map(|_| rng.random_range(0..maps.len())).collect();
        let mapped: Vec<Vec<Score>> = raw
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(j, s)| match s {
                        Score::Value(v) => Score::Value(maps[map_ids[j]](*v)),
                        other => *other,
                    })
                    .collect()
            })
            .collect();
        let names: Vec<String> = (0..configs).map(|i| i.to_string()).collect();
        let crit = Criterion::ALL[..criteria].to_vec();
        let a = build_panel(names.clone(), crit.clone(), raw).unwrap();
        let b = build_panel(names, crit, mapped).unwrap();
        ensure!(a.ranks == b.ranks, "trial {trial}: ranks changed under monotone map");
        ensure!(select_config(&a) == select_config(&b), "trial {trial}: selection changed");
    }
    Ok("A = [2.0, 1.5, 2.5], selects 1; 100 random panels invariant".into())
}

fn soft_ce(model: &HeadModel<f64>, x: &Array2<f64>, t: &Array2<f64>) -> f64 {
    let logits = model.logits(x.view()).unwrap();
    let mut total = 0.0;
    for (row, target) in logits.rows().into_iter().zip(t.rows()) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total -= row.iter().zip(target.iter()).map(|(l, p)| p * (l - lse)).sum::<f64>();
    }
    total / x.nrows() as f64
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for instance in 0..100 {
        let (n, d, c) = (rng.random_range(1..=6), rng.random_range(1..=5), rng.random_range(2..=5));
        let arch = if instance % 2 == 0 {
            Architecture::Linear
        } else {
            Architecture::Mlp { hidden_width: rng.random_range(1..=6) }
        };
        let model = HeadModel::<f64>::init(arch, d, c, rng.random());
        let layers: Vec<Layer<f64>> = model
            .layers()
            .iter()
            .map(|l| Layer {
                weight: l.weight.mapv(|_| rng.random_range(-1.0..1.0)),
                bias: l.bias.mapv(|_| rng.random_range(-0.5..0.5)),
            })
            .collect();
        let model = HeadModel::from_layers(arch, 0, layers).unwrap();
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
        let mut t = Array2::from_shape_fn((n, c), |_| rng.random_range(0.0..1.0));
        for mut row in t.rows_mut() {
            let s = row.sum();
            row /= s;
        }
        let (_, grads) = loss_gradient(&model, x.view(), t.view()).map_err(|e| e.to_string())?;
        let (mut diff, mut scale) = (0.0f64, 0.0f64);
        for li in 0..model.layers().len() {
            let shape = model.layers()[li].weight.dim();
            let positions: Vec<(bool, usize, usize)> = (0..shape.0)
                .flat_map(|r| (0..shape.1).map(move |col| (true, r, col)))
                .chain((0..shape.0).map(|r| (false, r, 0)))
                .collect();
            for (is_weight, r, col) in positions {
                let probe = |delta: f64| {
                    let mut layers = model.layers().to_vec();
                    if is_weight {
                        layers[li].weight[[r, col]] += delta;
                    } else {
                        layers[li].bias[r] += delta;
                    }
                    soft_ce(&HeadModel::from_layers(arch, 0, layers).unwrap(), &x, &t)
                };
                let numeric = (probe(h) - probe(-h)) / (2.0 * h);
                let analytic = if is_weight { grads[li].weight[[r, col]] } else { grads[li].bias[r] };
                diff += (numeric - analytic).powi(2);
                scale = scale.max(numeric.abs()).max(analytic.abs());
            }
        }
        let rel = diff.sqrt() / scale.max(1e-12);
        worst = worst.max(rel);
        ensure!(rel < 1e-6, "instance {instance} ({arch:?}): relative error {rel:.2e}");
    }
    Ok(format!("100 instances (50 linear, 50 mlp); max relative error {worst:.2e}"))
}

fn one_hot_rows(labels: &[usize], c: usize) -> Array2<f64> {
    let mut m = Array2::zeros((labels.len(), c));
    for (i, &l) in labels.iter().enumerate() {
        m[[i, l]] = 1.0;
    }
    m
}

fn softmax_oracle(l: &Array2<f64>) -> Array2<f64> {
    let mut p = l.clone();
    for mut row in p.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..50 {
        let (n, c, k) = (rng.random_range(1..=10), rng.random_range(2..=6), rng.random_range(1..=7));
        let ids: Vec<u64> = (0..n as u64).collect();
        let logits: Vec<Array2<f64>> =
            (0..k).map(|_| Array2::from_shape_fn((n, c), |_| rng.random_range(-3.0..3.0))).collect();
        let hard: Vec<SourceRows<f64>> = logits
            .iter()
            .map(|l| SourceRows::new(ids.clone(), one_hot_rows(&vpet_core::outputs::argmax_rows(l.view()), c)))
            .collect();
        let labels = ensemble_mean_labels(&hard).map_err(|e| e.to_string())?;
        for row in labels.soft.rows() {
            ensure!((row.sum() - 1.0).abs() <= 1e-12, "trial {trial}: row sums to {}", row.sum());
            for &v in row {
                let votes = v * k as f64;
                ensure!((votes - votes.round()).abs() <= 1e-12, "trial {trial}: {v} is not a multiple of 1/{k}");
            }
        }

        let copies = |m: &Array2<f64>| vec![SourceRows::new(ids.clone(), m.clone()); k];
        let single = &logits[0];
        let ml = ensemble_mean_labels(&copies(&hard[0].values)).unwrap();
        ensure!(ml.soft == hard[0].values, "trial {trial}: MeanLabels not idempotent");
        let expected = softmax_oracle(single);
        for (name, soft) in [
            ("MeanLogits", ensemble_mean_logits(&copies(single)).unwrap().soft),
            ("MeanProbabilities", ensemble_mean_probs(&copies(single)).unwrap().soft),
        ] {
            let dev = (&soft - &expected).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            ensure!(dev <= 1e-12, "trial {trial}: {name} of {k} copies deviates by {dev:.1e}");
        }

        let rescaled: Vec<SourceRows<f64>> = logits
            .iter()
            .map(|l| {
                let (a, b) = (rng.random_range(0.1..20.0), rng.random_range(-5.0..5.0));
                let m = l.mapv(|v| a * v + b);
                SourceRows::new(ids.clone(), one_hot_rows(&vpet_core::outputs::argmax_rows(m.view()), c))
            })
            .collect();
        ensure!(
            ensemble_mean_labels(&rescaled).unwrap().soft == labels.soft,
            "trial {trial}: MeanLabels changed under monotone rescaling"
        );
    }
    let a = array![[2.0, 0.0]];
    let b = array![[0.0, 1.0]];
    let before = ensemble_mean_logits(&[SourceRows::new(vec![0], a.clone()), SourceRows::new(vec![0], b.clone())]).unwrap();
    let after = ensemble_mean_logits(&[SourceRows::new(vec![0], a), SourceRows::new(vec![0], b * 10.0)]).unwrap();
    ensure!(before.hard_labels() == [0] && after.hard_labels() == [1], "constructed MeanLogits flip did not occur");
    Ok(format!(
        "50 random instances; MeanLogits argmax flips {:?} -> {:?} under rescaling",
        before.soft.row(0).to_vec(),
        after.soft.row(0).to_vec()
    ))
}

fn criterion_5() -> Check {
    let (rows, mean) = entropy_profile(Array2::<f64>::eye(8).view());
    ensure!(mean == 0.0 && rows.iter().all(|&h| h == 0.0), "one-hot entropy {mean}");
    let (_, uniform) = entropy_profile(Array2::from_elem((3, 8), 0.125).view());
    ensure!((uniform - 8f64.ln()).abs() <= 1e-12, "uniform entropy {uniform}");
    Ok(format!("one-hot 0, uniform(8) {uniform} vs ln 8 = {}", 8f64.ln()))
}

fn benchmark_config(views: usize, heads: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        schema: 1,
        embedding_sources: (0..views)
            .map(|v| SourceSpec {
                name: format!("view{v}"),
                path: format!("view{v}.emb").into(),
            })
            .collect(),
        head_variants: benchmark_heads()[..heads].to_vec(),
        split: benchmark_split(seed),
        strategy: EnsembleStrategy::MeanLabels,
        tau: 0.0,
        final_trainee: Some(PairId::new(0, 0)),
        mix_labeled: true,
        seed,
    }
}

fn criterion_6() -> Check {
    let seeds = 5;
    let (mut labeled_only, mut st, mut pet, mut vpet) = (0.0, 0.0, 0.0, 0.0);
    for seed in 0..seeds {
        let views = diverse_views(&SyntheticSpec {
            seed,
            ..Default::default()
        });
        ensure!(views.len() == 4, "benchmark has {} views", views.len());
        let run = |v: usize, h: usize| run_vpet_with_sources(&benchmark_config(v, h, seed), &views[..v]);
        let st_run = run(1, 1).map_err(|e| e.to_string())?;
        ensure!(st_run.pseudo_labels.len() == 4000, "{} unlabeled samples", st_run.pseudo_labels.len());
        let pet_run = run(1, 2).map_err(|e| e.to_string())?;
        let vpet_run = run(2, 2).map_err(|e| e.to_string())?;
        labeled_only += 100.0 * st_run.result.per_source_top1["m0n0"] / seeds as f64;
        st += 100.0 * st_run.result.final_top1 / seeds as f64;
        pet += 100.0 * pet_run.result.final_top1 / seeds as f64;
        vpet += 100.0 * vpet_run.result.final_top1 / seeds as f64;
    }
    let detail = format!("labeled-only {labeled_only:.2}, ST {st:.2}, PET {pet:.2}, V-PET {vpet:.2} (mean top-1 %, 5 seeds)");
    ensure!(pet >= st - 0.5, "PET below ST: {detail}");
    ensure!(vpet >= pet - 0.5, "V-PET below PET: {detail}");
    ensure!(vpet >= labeled_only + 2.0, "V-PET gain under 2 points: {detail}");
    Ok(detail)
}

fn criterion_7() -> Check {
    let grid: Vec<HeadConfig> = [(3e-4, 5), (1e-3, 10), (3e-3, 30), (1e-2, 30), (1e-1, 30), (1.0, 50)]
        .iter()
        .map(|&(lr, epochs)| HeadConfig::new(Architecture::Linear, lr, epochs))
        .collect();
    let (mut selected_error, mut random_error) = (0.0, 0.0);
    for seed in 0..10u64 {
        let views = diverse_views(&SyntheticSpec {
            seed,
            views: 1,
            ..Default::default()
        });
        let split = make_split(&views[0].1, &benchmark_split(seed)).map_err(|e| e.to_string())?;
        let sweep = run_hyperparameter_sweep(&grid, &split, seed).map_err(|e| e.to_string())?;
        let test_labels = split.test.labels().unwrap();
        let accs: Vec<f64> = sweep
            .models
            .iter()
            .map(|m| 100.0 * accuracy(&forward(m, &split.test).unwrap().predictions, test_labels))
            .collect();
        let oracle = accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        selected_error += (oracle - accs[sweep.selected]) / 10.0;
        random_error += accs.iter().map(|a| oracle - a).sum::<f64>() / accs.len() as f64 / 10.0;
    }
    let detail = format!("mean |error| selected {selected_error:.2} pts vs uniform-random {random_error:.2} pts over 10 seeds");
    ensure!(selected_error <= random_error, "{detail}");
    Ok(detail)
}

fn vpet_bin(args: &[&str], cwd: &Path) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_vpet"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("vpet {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn files_under(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().unwrap() != "timings.json" {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn criterion_8() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    vpet_bin(&["synth", "--views", "2", "--samples-per-class", "160", "--seed", "11", "--out-dir", "data"], root)?;
    let first = vpet_bin(&["vpet", "--config", "data/config.json", "--out-dir", "run1", "--threads", "1"], root)?;
    let second = vpet_bin(&["vpet", "--config", "data/config.json", "--out-dir", "run2", "--threads", "1"], root)?;
    ensure!(first == second, "stdout differs: {first:?} vs {second:?}");
    let (a, b) = (fs::read(root.join("run1/result.json")), fs::read(root.join("run2/result.json")));
    ensure!(a.as_ref().ok() == b.as_ref().ok() && a.is_ok(), "result.json differs");
    let (fa, fb) = (files_under(&root.join("run1")), files_under(&root.join("run2")));
    ensure!(fa == fb, "output files differ");
    Ok(format!("{} identical; {} output files byte-identical", first.trim(), fa.len()))
}

fn header(n: u32, d: u32, c: u32, flags: u32) -> Vec<u8> {
    let mut b = b"EMB1".to_vec();
    for v in [1, n, d, c, flags] {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

fn criterion_9() -> Check {
    let labels: Vec<usize> = (0..47).flat_map(|c| std::iter::repeat_n(c, 64)).collect();
    let set = EmbeddingSet::with_sequential_ids(
        Array2::from_shape_fn((labels.len(), 1), |(i, _)| i as f64),
        Some(labels),
        47,
    )
    .unwrap();
    let split = make_split(&set, &SplitSpec::new(3, 0)).map_err(|e| e.to_string())?;
    ensure!(
        (split.labeled.len(), split.unlabeled.len()) == (141, 2867),
        "split {}/{}",
        split.labeled.len(),
        split.unlabeled.len()
    );
    let mut seen = HashSet::new();
    for part in [&split.labeled, &split.unlabeled, &split.validation, &split.test] {
        for id in part.ids() {
            ensure!(seen.insert(*id), "id {id} in two partitions");
        }
    }
    ensure!(seen.len() == set.len(), "partition misses samples");
    for c in 0..47 {
        let k = split.labeled.labels().unwrap().iter().filter(|&&l| l == c).count();
        ensure!(k == 3, "class {c} has {k} shots");
    }

    let record = Emb1Record {
        features: array![[1.0f32, -2.5, 3.25], [0.0, 1e-7, -0.0]],
        class_count: 3,
        labels: Some(vec![2, 0]),
        ids: Some(vec![10, 42]),
        soft: Some(array![[0.25f32, 0.25, 0.5], [1.0, 0.0, 0.0]]),
    };
    let bytes = record.encode();
    let mut manual = header(2, 3, 3, 0b111);
    for v in [1.0f32, -2.5, 3.25, 0.0, 1e-7, -0.0] {
        manual.extend_from_slice(&v.to_le_bytes());
    }
    for v in [2i32, 0] {
        manual.extend_from_slice(&v.to_le_bytes());
    }
    for v in [10u64, 42] {
        manual.extend_from_slice(&v.to_le_bytes());
    }
    for v in [0.25f32, 0.25, 0.5, 1.0, 0.0, 0.0] {
        manual.extend_from_slice(&v.to_le_bytes());
    }
    ensure!(bytes == manual, "encoding differs from the documented layout");
    let back = Emb1Record::decode(&bytes).map_err(|e| e.to_string())?;
    ensure!(back.encode() == bytes, "re-encode not byte-exact");

    let feature = |v: f32| v.to_le_bytes().to_vec();
    let cases: Vec<(&str, Vec<u8>, fn(&FormatError) -> bool)> = vec![
        ("bad magic", [b"EMB2".to_vec(), header(1, 1, 0, 0)[4..].to_vec(), feature(1.0)].concat(), |e| {
            matches!(e, FormatError::BadMagic { .. })
        }),
        ("bad version", {
            let mut b = header(1, 1, 0, 0);
            b[4] = 2;
            [b, feature(1.0)].concat()
        }, |e| matches!(e, FormatError::UnsupportedVersion(2))),
        ("short header", b"EMB1\x01\x00".to_vec(), |e| matches!(e, FormatError::Truncated { .. })),
        ("truncated features", [header(2, 2, 0, 0), feature(1.0)].concat(), |e| {
            matches!(e, FormatError::Truncated { .. })
        }),
        ("NaN feature", [header(1, 1, 0, 0), feature(f32::NAN)].concat(), |e| {
            matches!(e, FormatError::NonFinite { .. })
        }),
        ("label out of range", [header(1, 1, 2, 1), feature(1.0), 2i32.to_le_bytes().to_vec()].concat(), |e| {
            matches!(e, FormatError::LabelOutOfRange { label: 2, .. })
        }),
        ("negative label", [header(1, 1, 2, 1), feature(1.0), (-1i32).to_le_bytes().to_vec()].concat(), |e| {
            matches!(e, FormatError::LabelOutOfRange { label: -1, .. })
        }),
        ("trailing bytes", [header(1, 1, 0, 0), feature(1.0), vec![0]].concat(), |e| {
            matches!(e, FormatError::TrailingBytes(1))
        }),
        ("unknown flag", [header(1, 1, 0, 8), feature(1.0)].concat(), |e| matches!(e, FormatError::InvalidHeader(_))),
    ];
    let total = cases.len();
    for (name, bytes, expected) in cases {
        match Emb1Record::decode(&bytes) {
            Ok(_) => return Err(format!("{name}: decoded successfully")),
            Err(e) if expected(&e) => {}
            Err(e) => return Err(format!("{name}: unexpected error {e}")),
        }
    }
    Ok(format!("141/2867 split of 47x64, disjoint, 3 shots per class; byte-exact EMB1; {total} negative paths rejected"))
}

fn main() {
    let criteria: [(u32, &str, u64, fn() -> Check); 9] = [
        (1, "validator oracles", 10, criterion_1),
        (2, "rank aggregation", 1, criterion_2),
        (3, "gradient check", 10, criterion_3),
        (4, "ensemble algebra", 1, criterion_4),
        (5, "entropy diagnostic", 1, criterion_5),
        (6, "desk-scale V-PET trend", 120, criterion_6),
        (7, "hyperparameter selection", 300, criterion_7),
        (8, "determinism", 120, criterion_8),
        (9, "split and format", 1, criterion_9),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (id, name, limit, check) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > Duration::from_secs(limit) => {
                Err(format!("{detail}; exceeded {limit}s budget"))
            }
            other => other,
        };
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {id} [{name}]: {status} ({:.2}s) {detail}", elapsed.as_secs_f64());
        failures += usize::from(outcome.is_err());
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}

