//! End-to-end orchestration: supervised head training per (head, view)
//! pair, pseudo-labelling, ensembling and self-training of one final head.
//! Also the hyperparameter-selection and ensemble-size sweeps.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{concatenate, Array2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{make_split, DatasetSplit, EmbeddingSet, SplitSpec};
use crate::ensemble::{
    ensemble_outputs, entropy_profile, pseudo_label_accuracy, write_pseudo_label_file, EnsembleStrategy,
    PseudoLabelSet, ThresholdPolicy,
};
use crate::error::PipelineError;
use crate::format::{read_embedding_file, write_embedding_file, Emb1Record};
use crate::heads::{forward, softmax_rows, train_head, write_head_file, Architecture, HeadConfig, HeadModel, TrainTargets};
use crate::outputs::{accuracy, ModelOutputs};
use crate::validators::{build_panel, score_model, select_config, Criterion, ScorePanel};

pub const CONFIG_SCHEMA: u32 = 1;

fn default_schema() -> u32 {
    CONFIG_SCHEMA
}

fn default_true() -> bool {
    true
}

fn default_strategy() -> EnsembleStrategy {
    EnsembleStrategy::MeanLabels
}

/// One embedding file standing in for one foundation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub name: String,
    pub path: PathBuf,
}

/// A (head variant `n`, view `m`) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairId {
    pub head: usize,
    pub view: usize,
}

impl PairId {
    pub fn new(head: usize, view: usize) -> Self {
        Self { head, view }
    }

    /// Directory name of the pair's artifacts, e.g. `m0n1`.
    pub fn name(&self) -> String {
        format!("m{}n{}", self.view, self.head)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub embedding_sources: Vec<SourceSpec>,
    pub head_variants: Vec<HeadConfig>,
    pub split: SplitSpec,
    #[serde(default = "default_strategy")]
    pub strategy: EnsembleStrategy,
    #[serde(default)]
    pub tau: f64,
    /// `None`: chosen by the validator panel, or `(0, 0)` without validation data.
    #[serde(default)]
    pub final_trainee: Option<PairId>,
    #[serde(default = "default_true")]
    pub mix_labeled: bool,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::InvalidConfig(msg));
        if self.schema != CONFIG_SCHEMA {
            return bad(format!("unsupported schema {}", self.schema));
        }
        if self.embedding_sources.is_empty() {
            return bad("at least one embedding source is required".into());
        }
        if self.head_variants.is_empty() {
            return bad("at least one head variant is required".into());
        }
        if let Some(t) = self.final_trainee {
            if t.head >= self.head_variants.len() || t.view >= self.embedding_sources.len() {
                return bad(format!(
                    "final trainee {} outside {} heads x {} views",
                    t.name(),
                    self.head_variants.len(),
                    self.embedding_sources.len()
                ));
            }
        }
        ThresholdPolicy::new(self.tau)?;
        for (n, head) in self.head_variants.iter().enumerate() {
            head.validate().map_err(|error| PipelineError::Head { head: n, view: 0, error })?;
        }
        Ok(())
    }

    /// Reads a config; relative source paths resolve against the file's directory.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let mut config: Self = serde_json::from_slice(&fs::read(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        for source in &mut config.embedding_sources {
            if source.path.is_relative() {
                source.path = base.join(&source.path);
            }
        }
        Ok(config)
    }

    pub fn pairs(&self) -> Vec<PairId> {
        pair_grid(self.head_variants.len(), self.embedding_sources.len())
    }

    fn pair_config(&self, pair: PairId) -> HeadConfig {
        let variant = &self.head_variants[pair.head];
        variant.clone().with_seed(pair_seed(self.seed, variant.seed, pair))
    }
}

/// Pairs in view-major order: all heads of view 0, then view 1, ...
pub fn pair_grid(heads: usize, views: usize) -> Vec<PairId> {
    (0..views)
        .flat_map(|view| (0..heads).map(move |head| PairId::new(head, view)))
        .collect()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Training seed of one pair; independent of scheduling and of which other
/// pairs exist.
pub fn pair_seed(seed: u64, variant_seed: u64, pair: PairId) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ variant_seed) ^ ((pair.head as u64) << 32 | pair.view as u64))
}

/// Everything produced for one pair in phases (a) and (b).
#[derive(Debug, Clone)]
pub struct PairArtifacts {
    pub id: PairId,
    pub source_name: String,
    pub model: HeadModel<f64>,
    pub unlabeled_outputs: ModelOutputs<f64>,
    pub validation_outputs: ModelOutputs<f64>,
    pub test_top1: f64,
    /// Mean entropy of the pair's predictive distribution over the unlabeled pool.
    pub mean_entropy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraineeRule {
    Config,
    Validators,
    Default,
}

/// Deterministic summary written to `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VpetResult {
    pub final_top1: f64,
    pub final_trainee: PairId,
    pub trainee_rule: TraineeRule,
    pub strategy: EnsembleStrategy,
    pub pseudo_label_count: usize,
    pub pseudo_label_accuracy: f64,
    pub ensemble_mean_entropy: f64,
    pub per_source_top1: BTreeMap<String, f64>,
    pub mean_entropy_per_source: BTreeMap<String, f64>,
}

/// Wall-clock seconds per phase, written to `timings.json`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub train_and_label: f64,
    pub validate: f64,
    pub ensemble: f64,
    pub self_train: f64,
    pub total: f64,
}

impl PhaseTimings {
    pub fn self_train_share(&self) -> f64 {
        if self.total > 0.0 {
            self.self_train / self.total
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct VpetRun {
    pub result: VpetResult,
    pub timings: PhaseTimings,
    pub final_model: HeadModel<f64>,
    pub pairs: Vec<PairArtifacts>,
    pub panel: Option<ScorePanel>,
    pub pseudo_labels: PseudoLabelSet<f64>,
}

/// Loads the configured sources and runs the pipeline.
pub fn run_vpet(config: &ExperimentConfig) -> Result<VpetRun, PipelineError> {
    let sources = load_sources(config)?;
    run_vpet_with_sources(config, &sources)
}

pub fn load_sources(config: &ExperimentConfig) -> Result<Vec<(String, EmbeddingSet<f64>)>, PipelineError> {
    config
        .embedding_sources
        .iter()
        .map(|s| Ok((s.name.clone(), read_embedding_file::<f64>(&s.path)?)))
        .collect()
}

/// Splits source 0 and applies the same id partition to every other source.
pub fn split_sources(
    spec: &SplitSpec,
    sources: &[(String, EmbeddingSet<f64>)],
) -> Result<Vec<DatasetSplit<f64>>, PipelineError> {
    let (_, first) = sources.first().ok_or(PipelineError::InsufficientSources {
        available: 0,
        required: 1,
    })?;
    let base = make_split(first, spec)?;
    let mut splits = Vec::with_capacity(sources.len());
    for (name, set) in sources {
        if set.class_count() != first.class_count() || set.len() != first.len() {
            return Err(crate::error::DataError::MisalignedSources(format!(
                "source {name} has {} samples / {} classes, expected {} / {}",
                set.len(),
                set.class_count(),
                first.len(),
                first.class_count()
            ))
            .into());
        }
        splits.push(base.project(set)?);
    }
    Ok(splits)
}

fn top1(model: &HeadModel<f64>, set: &EmbeddingSet<f64>) -> Result<f64, crate::error::HeadError> {
    let outputs = forward(model, set)?;
    let labels = set.labels().unwrap_or(&[]);
    Ok(accuracy(&outputs.predictions, labels))
}

fn train_pair(
    config: &ExperimentConfig,
    names: &[String],
    splits: &[DatasetSplit<f64>],
    pair: PairId,
) -> Result<PairArtifacts, PipelineError> {
    let wrap = |error| PipelineError::Head {
        head: pair.head,
        view: pair.view,
        error,
    };
    let split = &splits[pair.view];
    let labels = split.labeled.labels().expect("labeled split keeps labels").to_vec();
    let model = train_head(&split.labeled, &TrainTargets::Hard(labels), &config.pair_config(pair)).map_err(wrap)?;
    let unlabeled_outputs = forward(&model, &split.unlabeled).map_err(wrap)?;
    let validation_outputs = forward(&model, &split.validation).map_err(wrap)?;
    let test_top1 = top1(&model, &split.test).map_err(wrap)?;
    let (_, mean_entropy) = entropy_profile(softmax_rows(unlabeled_outputs.logits.view()).view());
    Ok(PairArtifacts {
        id: pair,
        source_name: names[pair.view].clone(),
        model,
        unlabeled_outputs,
        validation_outputs,
        test_top1,
        mean_entropy,
    })
}

/// Phases (a) and (b) for every pair. Pairs run concurrently; each derives
/// its seed from the config seed and its own indices.
pub fn train_pairs(
    config: &ExperimentConfig,
    names: &[String],
    splits: &[DatasetSplit<f64>],
) -> Result<Vec<PairArtifacts>, PipelineError> {
    config
        .pairs()
        .into_par_iter()
        .map(|pair| train_pair(config, names, splits, pair))
        .collect()
}

/// Phase (d): a fresh head for `trainee`, trained on the soft pseudo-labels
/// (plus the one-hot labeled split when `mix_labeled`).
pub fn self_train(
    config: &ExperimentConfig,
    splits: &[DatasetSplit<f64>],
    trainee: PairId,
    pseudo: &PseudoLabelSet<f64>,
) -> Result<HeadModel<f64>, PipelineError> {
    let split = &splits[trainee.view];
    let classes = split.labeled.class_count();
    let pool = split.unlabeled.select_ids(&pseudo.ids)?;
    let mut features = pool.features().to_owned();
    let mut targets = pseudo.soft.clone();
    let mut ids = pseudo.ids.clone();
    if config.mix_labeled {
        let labeled = &split.labeled;
        let mut one_hot = Array2::<f64>::zeros((labeled.len(), classes));
        for (row, &l) in labeled.labels().expect("labeled split keeps labels").iter().enumerate() {
            one_hot[[row, l]] = 1.0;
        }
        features = concatenate(Axis(0), &[features.view(), labeled.features()]).expect("same width");
        targets = concatenate(Axis(0), &[targets.view(), one_hot.view()]).expect("same width");
        ids.extend_from_slice(labeled.ids());
    }
    if ids.is_empty() {
        return Err(PipelineError::InvalidConfig("self-training set is empty".into()));
    }
    let train_set = EmbeddingSet::new(features, None, classes, ids)?;
    train_head(&train_set, &TrainTargets::Soft(targets), &config.pair_config(trainee)).map_err(|error| {
        PipelineError::Head {
            head: trainee.head,
            view: trainee.view,
            error,
        }
    })
}

fn score_pairs(pairs: &[PairArtifacts], classes: usize, seed: u64) -> Result<ScorePanel, PipelineError> {
    let scores = pairs
        .par_iter()
        .map(|p| {
            score_model(&p.validation_outputs, classes, seed)
                .map(|row| row.into_iter().map(|s| s.score).collect::<Vec<_>>())
                .map_err(|error| PipelineError::Validator {
                    head: p.id.head,
                    view: p.id.view,
                    error,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(build_panel(
        pairs.iter().map(|p| p.id.name()).collect(),
        Criterion::ALL.to_vec(),
        scores,
    )?)
}

fn ensemble_pairs(
    pairs: &[&PairArtifacts],
    config: &ExperimentConfig,
) -> Result<PseudoLabelSet<f64>, PipelineError> {
    let outputs: Vec<&ModelOutputs<f64>> = pairs.iter().map(|p| &p.unlabeled_outputs).collect();
    Ok(ensemble_outputs(&outputs, config.strategy, &ThresholdPolicy::new(config.tau)?)?)
}

pub fn run_vpet_with_sources(
    config: &ExperimentConfig,
    sources: &[(String, EmbeddingSet<f64>)],
) -> Result<VpetRun, PipelineError> {
    config.validate()?;
    if sources.len() != config.embedding_sources.len() {
        return Err(PipelineError::InsufficientSources {
            available: sources.len(),
            required: config.embedding_sources.len(),
        });
    }
    let start = Instant::now();
    let names: Vec<String> = sources.iter().map(|(n, _)| n.clone()).collect();
    let splits = split_sources(&config.split, sources)?;
    if splits[0].test.is_empty() {
        return Err(PipelineError::InvalidConfig(
            "test split is empty; raise split.test_fraction".into(),
        ));
    }
    let classes = splits[0].labeled.class_count();

    let pairs = train_pairs(config, &names, &splits)?;
    let t_train = start.elapsed().as_secs_f64();

    let mut panel = None;
    let (trainee, trainee_rule) = match config.final_trainee {
        Some(t) => (t, TraineeRule::Config),
        None if !splits[0].validation.is_empty() => {
            let p = score_pairs(&pairs, classes, config.seed)?;
            let chosen = pairs[select_config(&p)].id;
            panel = Some(p);
            (chosen, TraineeRule::Validators)
        }
        None => (PairId::new(0, 0), TraineeRule::Default),
    };
    let t_validate = start.elapsed().as_secs_f64();

    let all: Vec<&PairArtifacts> = pairs.iter().collect();
    let pseudo = ensemble_pairs(&all, config)?;
    let t_ensemble = start.elapsed().as_secs_f64();

    let final_model = self_train(config, &splits, trainee, &pseudo)?;
    let final_top1 = top1(&final_model, &splits[trainee.view].test).map_err(|error| PipelineError::Head {
        head: trainee.head,
        view: trainee.view,
        error,
    })?;
    let t_self = start.elapsed().as_secs_f64();

    let pseudo_accuracy = if pseudo.is_empty() {
        0.0
    } else {
        pseudo_label_accuracy(&pseudo, splits[0].unlabeled_truth())?
    };
    let result = VpetResult {
        final_top1,
        final_trainee: trainee,
        trainee_rule,
        strategy: config.strategy,
        pseudo_label_count: pseudo.len(),
        pseudo_label_accuracy: pseudo_accuracy,
        ensemble_mean_entropy: entropy_profile(pseudo.soft.view()).1,
        per_source_top1: pairs.iter().map(|p| (p.id.name(), p.test_top1)).collect(),
        mean_entropy_per_source: pairs.iter().map(|p| (p.id.name(), p.mean_entropy)).collect(),
    };
    let timings = PhaseTimings {
        train_and_label: t_train,
        validate: t_validate - t_train,
        ensemble: t_ensemble - t_validate,
        self_train: t_self - t_ensemble,
        total: start.elapsed().as_secs_f64(),
    };
    Ok(VpetRun {
        result,
        timings,
        final_model,
        pairs,
        panel,
        pseudo_labels: pseudo,
    })
}

/// Writes model outputs as `outputs.emb` (features) and `logits.emb`, both
/// labelled with the predictions.
pub fn write_model_outputs(outputs: &ModelOutputs<f64>, dir: impl AsRef<Path>) -> Result<(), PipelineError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let classes = outputs.class_count() as u32;
    let predictions: Vec<i32> = outputs.predictions.iter().map(|&p| p as i32).collect();
    for (file, matrix) in [("outputs.emb", &outputs.features), ("logits.emb", &outputs.logits)] {
        let record = Emb1Record {
            features: matrix.mapv(|v| v as f32),
            class_count: classes,
            labels: Some(predictions.clone()),
            ids: Some(outputs.ids.clone()),
            soft: None,
        };
        fs::write(dir.join(file), record.encode())?;
    }
    Ok(())
}

pub fn read_model_outputs(dir: impl AsRef<Path>) -> Result<ModelOutputs<f64>, PipelineError> {
    let dir = dir.as_ref();
    let features = Emb1Record::decode(&fs::read(dir.join("outputs.emb"))?)?;
    let logits = Emb1Record::decode(&fs::read(dir.join("logits.emb"))?)?;
    let n = features.features.nrows();
    let ids = features.ids.clone().unwrap_or_else(|| (0..n as u64).collect());
    if logits.features.nrows() != n || logits.ids.as_ref().is_some_and(|l| *l != ids) {
        return Err(crate::error::DataError::MisalignedSources("outputs.emb and logits.emb disagree".into()).into());
    }
    Ok(ModelOutputs::from_logits(
        ids,
        features.features.mapv(f64::from),
        logits.features.mapv(f64::from),
    ))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), PipelineError> {
    let tmp = path.with_extension("json.tmp");
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

/// Writes the run directory: per-pair `model.head` and validation outputs,
/// `pseudo.emb`, `final.head`, `panel.csv`, `summary.csv`, `result.json`
/// and `timings.json`.
pub fn write_run(run: &VpetRun, dir: impl AsRef<Path>) -> Result<(), PipelineError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for pair in &run.pairs {
        let pair_dir = dir.join(pair.id.name());
        fs::create_dir_all(&pair_dir)?;
        write_head_file(&pair.model, pair_dir.join("model.head"))?;
        write_model_outputs(&pair.validation_outputs, &pair_dir)?;
    }
    write_pseudo_label_file(&run.pseudo_labels, dir.join("pseudo.emb"))?;
    write_head_file(&run.final_model, dir.join("final.head"))?;
    if let Some(panel) = &run.panel {
        fs::write(dir.join("panel.csv"), panel.to_csv())?;
        fs::write(dir.join("summary.csv"), panel.summary_csv())?;
    }
    write_json(&run.result, &dir.join("result.json"))?;
    write_json(&run.timings, &dir.join("timings.json"))?;
    Ok(())
}

/// Selection over a hyperparameter grid.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub panel: ScorePanel,
    pub selected: usize,
    pub selected_config: HeadConfig,
    pub models: Vec<HeadModel<f64>>,
}

fn describe(config: &HeadConfig) -> String {
    let arch = match config.architecture {
        Architecture::Linear => "linear".to_string(),
        Architecture::Mlp { hidden_width } => format!("mlp{hidden_width}"),
    };
    format!("{arch}/lr={}/epochs={}", config.learning_rate, config.epochs)
}

/// Trains one head per grid point on the labeled split, scores each on the
/// validation split and selects by lowest average rank.
pub fn run_hyperparameter_sweep(
    grid: &[HeadConfig],
    split: &DatasetSplit<f64>,
    seed: u64,
) -> Result<SweepOutcome, PipelineError> {
    if grid.is_empty() {
        return Err(PipelineError::InvalidConfig("empty hyperparameter grid".into()));
    }
    if split.validation.is_empty() {
        return Err(PipelineError::InvalidConfig("validation split is empty".into()));
    }
    let classes = split.labeled.class_count();
    let labels = split.labeled.labels().expect("labeled split keeps labels").to_vec();
    let trained = grid
        .par_iter()
        .enumerate()
        .map(|(i, config)| {
            let wrap = |error| PipelineError::Head { head: i, view: 0, error };
            let model = train_head(&split.labeled, &TrainTargets::Hard(labels.clone()), config).map_err(wrap)?;
            let outputs = forward(&model, &split.validation).map_err(wrap)?;
            let scores = score_model(&outputs, classes, seed)
                .map_err(|error| PipelineError::Validator { head: i, view: 0, error })?;
            Ok((model, scores.into_iter().map(|s| s.score).collect::<Vec<_>>()))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let (models, scores): (Vec<_>, Vec<_>) = trained.into_iter().unzip();
    let names = grid.iter().enumerate().map(|(i, c)| format!("g{i}:{}", describe(c))).collect();
    let panel = build_panel(names, Criterion::ALL.to_vec(), scores)?;
    let selected = select_config(&panel);
    Ok(SweepOutcome {
        selected_config: grid[selected].clone(),
        panel,
        selected,
        models,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub ensemble_size: usize,
    pub mean_top1: f64,
    pub subsets: usize,
}

pub const SCALING_SUBSETS: usize = 5;

fn binomial(n: usize, k: usize) -> u128 {
    (0..k as u128).fold(1, |acc, i| acc * (n as u128 - i) / (i + 1))
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            go(i + 1, n, k, current, out);
            current.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Subsets of `0..pool` of size `size`: all of them when there are at most
/// [`SCALING_SUBSETS`], else that many distinct seeded draws.
pub fn scaling_subsets(pool: usize, size: usize, seed: u64) -> Vec<Vec<usize>> {
    if binomial(pool, size) <= SCALING_SUBSETS as u128 {
        return combinations(pool, size);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ size as u64));
    let mut out: Vec<Vec<usize>> = Vec::new();
    while out.len() < SCALING_SUBSETS {
        let mut s = sample(&mut rng, pool, size).into_vec();
        s.sort_unstable();
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// Final accuracy against ensemble size. The pool is the first
/// `max_sources` pairs in view-major order; the trainee is fixed to
/// `final_trainee` (or `(0, 0)`) for every subset.
pub fn run_scaling_sweep(
    config: &ExperimentConfig,
    sources: &[(String, EmbeddingSet<f64>)],
    max_sources: usize,
) -> Result<Vec<ScalingRow>, PipelineError> {
    config.validate()?;
    let available = config.pairs().len();
    if max_sources == 0 || max_sources > available {
        return Err(PipelineError::InsufficientSources {
            available,
            required: max_sources.max(1),
        });
    }
    let names: Vec<String> = sources.iter().map(|(n, _)| n.clone()).collect();
    let splits = split_sources(&config.split, sources)?;
    if splits[0].test.is_empty() {
        return Err(PipelineError::InvalidConfig("test split is empty".into()));
    }
    let pairs = train_pairs(config, &names, &splits)?;
    let trainee = config.final_trainee.unwrap_or(PairId::new(0, 0));
    let mut rows = Vec::with_capacity(max_sources);
    for size in 1..=max_sources {
        let subsets = scaling_subsets(max_sources, size, config.seed);
        let accuracies = subsets
            .par_iter()
            .map(|subset| {
                let chosen: Vec<&PairArtifacts> = subset.iter().map(|&i| &pairs[i]).collect();
                let pseudo = ensemble_pairs(&chosen, config)?;
                let model = self_train(config, &splits, trainee, &pseudo)?;
                top1(&model, &splits[trainee.view].test).map_err(|error| PipelineError::Head {
                    head: trainee.head,
                    view: trainee.view,
                    error,
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(ScalingRow {
            ensemble_size: size,
            mean_top1: accuracies.iter().sum::<f64>() / accuracies.len() as f64,
            subsets: accuracies.len(),
        });
    }
    Ok(rows)
}

pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut out = String::from("ensemble_size,mean_top1,subsets\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.ensemble_size, r.mean_top1, r.subsets));
    }
    out
}

/// Writes every split part of a labeled source as EMB1 files in `dir`.
pub fn write_split(split: &DatasetSplit<f64>, dir: impl AsRef<Path>) -> Result<(), PipelineError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (name, part) in [
        ("labeled", &split.labeled),
        ("unlabeled", &split.unlabeled),
        ("validation", &split.validation),
        ("test", &split.test),
    ] {
        write_embedding_file(part, dir.join(format!("{name}.emb")))?;
    }
    Ok(())
}
