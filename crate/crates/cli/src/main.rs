use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vpet_core::data::{make_split, EmbeddingSet, SplitSpec};
use vpet_core::ensemble::{
    ensemble_outputs, entropy_profile, pseudo_label, read_pseudo_label_file, write_pseudo_label_file,
    EnsembleStrategy, PseudoLabelSet, ThresholdPolicy,
};
use vpet_core::format::{read_embedding_file, write_embedding_file, Manifest};
use vpet_core::heads::{
    forward, read_head_file, train_head, write_head_file, Architecture, HeadConfig, TrainTargets,
};
use vpet_core::pipeline::{
    load_sources, read_model_outputs, run_scaling_sweep, run_vpet, scaling_csv, write_model_outputs,
    write_run, ExperimentConfig, SourceSpec,
};
use vpet_core::report::build_ranking_report;
use vpet_core::synthetic::{benchmark_heads, benchmark_split, diverse_views, SyntheticSpec};
use vpet_core::validators::{build_panel, score_model, select_config, Criterion};

#[derive(Parser)]
#[command(name = "vpet", version, about = "Pseudo-label ensembling over frozen embeddings")]
struct Cli {
    /// Random seed; for `vpet` and `sweep-scaling` it overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Experiment config JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a labeled EMB1 file into labeled/unlabeled/validation/test files.
    Split(SplitArgs),
    /// Train one head on hard labels or on soft pseudo-labels.
    TrainHead(TrainArgs),
    /// Run a head over a set; write its outputs and thresholded one-hot labels.
    PseudoLabel(PseudoLabelArgs),
    /// Ensemble the outputs of several heads into soft pseudo-labels.
    Ensemble(EnsembleArgs),
    /// Score one head's validation outputs with all seven criteria.
    Validate(ValidateArgs),
    /// Rank several heads' validation outputs and pick the best.
    Select(SelectArgs),
    /// Run the full pipeline from `--config`.
    Vpet,
    /// Final accuracy against ensemble size.
    SweepScaling(ScalingArgs),
    /// Rank-frequency report of a settings × methods accuracy CSV.
    Report(ReportArgs),
    /// Write the synthetic diverse-views benchmark and a matching config.
    Synth(SynthArgs),
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    shots: usize,
    #[arg(long, default_value_t = 0.0)]
    validation_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    test_fraction: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchKind {
    Linear,
    Mlp,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    /// Soft targets (`pseudo.emb`); rows of `--train` are matched by id.
    #[arg(long)]
    soft: Option<PathBuf>,
    /// Head config JSON; overrides the architecture and optimiser flags.
    #[arg(long)]
    head_config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "linear")]
    arch: ArchKind,
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 5e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
}

#[derive(Args)]
struct PseudoLabelArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    MeanLabels,
    MeanLogits,
    MeanProbabilities,
}

impl From<StrategyArg> for EnsembleStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::MeanLabels => EnsembleStrategy::MeanLabels,
            StrategyArg::MeanLogits => EnsembleStrategy::MeanLogits,
            StrategyArg::MeanProbabilities => EnsembleStrategy::MeanProbabilities,
        }
    }
}

#[derive(Args)]
struct EnsembleArgs {
    /// Output directories written by `pseudo-label`.
    #[arg(long, num_args = 1.., required = true)]
    sources: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "mean-labels")]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
}

#[derive(Args)]
struct ValidateArgs {
    /// Directory holding `outputs.emb` and `logits.emb`.
    #[arg(long)]
    outputs: PathBuf,
    #[arg(long)]
    classes: usize,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long, num_args = 1.., required = true)]
    outputs: Vec<PathBuf>,
    #[arg(long)]
    classes: usize,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long)]
    max_sources: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// CSV with header `setting,<method>,...` and one row per setting.
    #[arg(long)]
    table: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    views: usize,
    #[arg(long, default_value_t = 643)]
    samples_per_class: usize,
}

enum Failure {
    Usage(String),
    Data(Box<dyn Error>),
}

impl<E: Error + 'static> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(Box::new(e))
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon_threads(threads) {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn rayon_threads(threads: usize) -> Result<(), String> {
    if threads == 0 {
        return Err("--threads must be positive".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn dispatch(cli: &Cli) -> CliResult {
    let seed = cli.seed.unwrap_or(0);
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Split(a) => split(a, seed, out),
        Command::TrainHead(a) => train(a, seed, out),
        Command::PseudoLabel(a) => pseudo(a, out),
        Command::Ensemble(a) => ensemble(a, out),
        Command::Validate(a) => validate(a, seed),
        Command::Select(a) => select(a, seed, out),
        Command::Vpet => vpet(cli, out),
        Command::SweepScaling(a) => scaling(cli, a, out),
        Command::Report(a) => report(a, out),
        Command::Synth(a) => synth(a, seed, out),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("--config <json> is required".into()))?;
    let mut config = ExperimentConfig::from_json_file(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> CliResult {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

#[derive(Serialize)]
struct SplitManifest<'a> {
    source: String,
    spec: &'a SplitSpec,
    labeled: usize,
    unlabeled: usize,
    validation: usize,
    test: usize,
}

fn split(a: &SplitArgs, seed: u64, out: &Path) -> CliResult {
    let source: EmbeddingSet<f64> = read_embedding_file(&a.input)?;
    let spec = SplitSpec::new(a.shots, seed)
        .with_validation_fraction(a.validation_fraction)
        .with_test_fraction(a.test_fraction);
    let split = make_split(&source, &spec)?;
    fs::create_dir_all(out)?;
    for (name, part) in [
        ("labeled", &split.labeled),
        ("unlabeled", &split.unlabeled),
        ("validation", &split.validation),
        ("test", &split.test),
    ] {
        write_embedding_file(part, out.join(format!("{name}.emb")))?;
    }
    write_json(
        &SplitManifest {
            source: a.input.display().to_string(),
            spec: &spec,
            labeled: split.labeled.len(),
            unlabeled: split.unlabeled.len(),
            validation: split.validation.len(),
            test: split.test.len(),
        },
        &out.join("split.manifest.json"),
    )?;
    let (ids, labels) = split.unlabeled_truth().reveal();
    let mut csv = String::from("id,label\n");
    for (id, label) in ids.iter().zip(labels) {
        csv.push_str(&format!("{id},{label}\n"));
    }
    fs::write(out.join("unlabeled_truth.csv"), csv)?;
    println!(
        "labeled={} unlabeled={} validation={} test={}",
        split.labeled.len(),
        split.unlabeled.len(),
        split.validation.len(),
        split.test.len()
    );
    Ok(())
}

fn train(a: &TrainArgs, seed: u64, out: &Path) -> CliResult {
    let set: EmbeddingSet<f64> = read_embedding_file(&a.train)?;
    let mut config = match &a.head_config {
        Some(path) => serde_json::from_slice::<HeadConfig>(&fs::read(path)?)?,
        None => {
            let architecture = match a.arch {
                ArchKind::Linear => Architecture::Linear,
                ArchKind::Mlp => Architecture::Mlp { hidden_width: a.hidden },
            };
            let mut c = HeadConfig::new(architecture, a.lr, a.epochs);
            c.weight_decay = a.weight_decay;
            c.batch_size = a.batch_size;
            c
        }
    };
    config.seed = seed;
    let (train_set, targets) = match &a.soft {
        Some(path) => {
            let pseudo: PseudoLabelSet<f64> = read_pseudo_label_file(path)?;
            (set.select_ids(&pseudo.ids)?, TrainTargets::Soft(pseudo.soft))
        }
        None => {
            let labels = set
                .labels()
                .ok_or_else(|| Failure::Usage(format!("{} has no labels; pass --soft", a.train.display())))?
                .to_vec();
            (set, TrainTargets::Hard(labels))
        }
    };
    let model = train_head(&train_set, &targets, &config)?;
    fs::create_dir_all(out)?;
    let path = out.join("model.head");
    write_head_file(&model, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn pseudo(a: &PseudoLabelArgs, out: &Path) -> CliResult {
    let model = read_head_file::<f64>(&a.model)?;
    let set: EmbeddingSet<f64> = read_embedding_file(&a.input)?;
    let outputs = forward(&model, &set)?;
    let policy = ThresholdPolicy::new(a.tau)?;
    let one_hot = pseudo_label(&outputs, &policy);
    let labels = PseudoLabelSet::new(one_hot.ids, one_hot.values, 1, EnsembleStrategy::MeanLabels)?;
    write_model_outputs(&outputs, out)?;
    write_pseudo_label_file(&labels, out.join("labels.emb"))?;
    println!("accepted={} of {}", labels.len(), outputs.len());
    Ok(())
}

fn ensemble(a: &EnsembleArgs, out: &Path) -> CliResult {
    let outputs = a
        .sources
        .iter()
        .map(read_model_outputs)
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<_> = outputs.iter().collect();
    let policy = ThresholdPolicy::new(a.tau)?;
    let pseudo = ensemble_outputs(&refs, a.strategy.into(), &policy)?;
    fs::create_dir_all(out)?;
    write_pseudo_label_file(&pseudo, out.join("pseudo.emb"))?;
    let (_, mean_entropy) = entropy_profile(pseudo.soft.view());
    println!("samples={} sources={} mean_entropy={mean_entropy}", pseudo.len(), pseudo.source_count);
    Ok(())
}

fn validate(a: &ValidateArgs, seed: u64) -> CliResult {
    let outputs = read_model_outputs(&a.outputs)?;
    println!("criterion,score,higher_is_better");
    for s in score_model(&outputs, a.classes, seed)? {
        println!("{},{},{}", s.criterion, s.score, s.higher_is_better);
    }
    Ok(())
}

fn select(a: &SelectArgs, seed: u64, out: &Path) -> CliResult {
    let mut scores = Vec::with_capacity(a.outputs.len());
    for dir in &a.outputs {
        let outputs = read_model_outputs(dir)?;
        scores.push(score_model(&outputs, a.classes, seed)?.into_iter().map(|s| s.score).collect());
    }
    let names = a.outputs.iter().map(|p| p.display().to_string()).collect();
    let panel = build_panel(names, Criterion::ALL.to_vec(), scores)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("panel.csv"), panel.to_csv())?;
    fs::write(out.join("summary.csv"), panel.summary_csv())?;
    print!("{}", panel.summary_csv());
    println!("selected={}", a.outputs[select_config(&panel)].display());
    Ok(())
}

fn vpet(cli: &Cli, out: &Path) -> CliResult {
    let config = load_config(cli)?;
    let run = run_vpet(&config)?;
    write_run(&run, out)?;
    println!("final_top1={}", run.result.final_top1);
    Ok(())
}

fn scaling(cli: &Cli, a: &ScalingArgs, out: &Path) -> CliResult {
    let config = load_config(cli)?;
    let sources = load_sources(&config)?;
    let rows = run_scaling_sweep(&config, &sources, a.max_sources)?;
    let csv = scaling_csv(&rows);
    fs::create_dir_all(out)?;
    fs::write(out.join("scaling.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn parse_table(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("empty table")?;
    let methods: Vec<String> = header.split(',').skip(1).map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .skip(1)
            .map(|v| v.trim().parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((methods, rows))
}

fn report(a: &ReportArgs, out: &Path) -> CliResult {
    let text = fs::read_to_string(&a.table)?;
    let (methods, rows) = parse_table(&text).map_err(|e| Failure::Data(e.into()))?;
    let report = build_ranking_report(methods, &rows)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("ranking.csv"), report.to_csv())?;
    write_json(&report, &out.join("ranking.json"))?;
    print!("{}", report.to_csv());
    Ok(())
}

fn synth(a: &SynthArgs, seed: u64, out: &Path) -> CliResult {
    let spec = SyntheticSpec {
        views: a.views,
        samples_per_class: a.samples_per_class,
        seed,
        ..Default::default()
    };
    fs::create_dir_all(out)?;
    let mut sources = Vec::new();
    for (name, set) in diverse_views(&spec) {
        let file = format!("{name}.emb");
        write_embedding_file(&set, out.join(&file))?;
        Manifest {
            dataset_name: "synthetic-diverse-views".into(),
            class_names: (0..spec.classes).map(|c| format!("class{c}")).collect(),
            source_model: name.clone(),
            ..Default::default()
        }
        .write(out.join(&file))?;
        sources.push(SourceSpec {
            name,
            path: PathBuf::from(file),
        });
    }
    let config = ExperimentConfig {
        schema: vpet_core::pipeline::CONFIG_SCHEMA,
        embedding_sources: sources,
        head_variants: benchmark_heads(),
        split: benchmark_split(seed),
        strategy: EnsembleStrategy::MeanLabels,
        tau: 0.0,
        final_trainee: None,
        mix_labeled: true,
        seed,
    };
    write_json(&config, &out.join("config.json"))?;
    println!("wrote {} views and config.json to {}", a.views, out.display());
    Ok(())
}
