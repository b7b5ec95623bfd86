//! `damia`: train, attack and sweep domain-adapted classifiers.
//!
//! Exit status is 0 on success, 2 on a usage error and 1 on any other error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use damia_core::attack::{attack_split, fit_threshold, ScoreSet};
use damia_core::da::{load_model, save_model, train, train_baseline, DaJob, Method};
use damia_core::domain::{load_idx, load_idx_images, load_image_dir, save_idx, similarity, PerturbKind, Split};
use damia_core::harness::{
    build_scenario, load_records, render_markdown, run_and_write, summarize, sweep_points,
    ExperimentConfig, PerturbSpec, Scenario,
};
use damia_core::metrics::{accuracy, write_all};
use damia_core::{perturb, Error, Result, Rng};

#[derive(Parser)]
#[command(name = "damia", version, about = "Domain adaptation as a membership-inference defense")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model from an experiment config and write the model file.
    Train(TrainArgs),
    /// Fit the threshold attack on a score CSV or on a model and its data.
    Attack(AttackArgs),
    /// Write generalization-error, prediction-distribution and embedding CSVs.
    Metrics(MetricsArgs),
    /// Apply an image perturbation to an IDX file.
    Perturb(PerturbArgs),
    /// Perceptual-hash similarity of two directories of IDX image files.
    Similarity(SimilarityArgs),
    /// Run a full experiment config.
    Experiment(ExperimentArgs),
    /// Summarize a records CSV as a markdown table.
    Report(ReportArgs),
}

/// Options that override fields of the experiment config.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// Replace the seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the method list with this single method.
    #[arg(long)]
    method: Option<Method>,
    /// MMD weight.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Replace the perturbation list (q3_similarity).
    #[arg(long)]
    kind: Option<PerturbKind>,
    /// Severity for `--kind`; the kind's default when omitted.
    #[arg(long, requires = "kind")]
    severity: Option<f64>,
}

impl Overrides {
    fn apply(&self, mut c: ExperimentConfig) -> Result<ExperimentConfig> {
        if let Some(s) = self.seed {
            c.seeds = vec![s];
        }
        if let Some(m) = self.method {
            c.methods = vec![m];
        }
        if let Some(l) = self.lambda {
            c.train.lambda_mmd = l;
        }
        if let Some(e) = self.epochs {
            c.train.epochs = e;
        }
        if let Some(kind) = self.kind {
            c.sweep.perturbations = vec![PerturbSpec {
                kind,
                severity: self.severity,
            }];
        }
        c.validate()?;
        Ok(c)
    }
}

/// Selects one job's data from a config.
#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    /// Index of the sweep point whose data is used.
    #[arg(long, default_value_t = 0)]
    point: usize,
}

impl DataArgs {
    fn resolve(&self) -> Result<(ExperimentConfig, Scenario, u64)> {
        let config = self.overrides.apply(ExperimentConfig::load(&self.config)?)?;
        let points = sweep_points(&config);
        let point = points.get(self.point).ok_or_else(|| {
            Error::Argument(format!("sweep point {} out of {}", self.point, points.len()))
        })?;
        let seed = config.seeds[0];
        let scenario = build_scenario(&config, point, seed)?;
        Ok((config, scenario, seed))
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum Side {
    Target,
    Source,
}

#[derive(Args)]
struct AttackArgs {
    /// CSV with columns `score,is_member`.
    #[arg(long, conflicts_with_all = ["model", "config"])]
    scores: Option<PathBuf>,
    #[arg(long, requires = "config")]
    model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, default_value_t = 0)]
    point: usize,
    /// Domain whose train/non-train partitions are attacked.
    #[arg(long, value_enum, default_value_t = Side::Target)]
    side: Side,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Categories for prediction distributions, comma separated; all when omitted.
    #[arg(long, value_delimiter = ',')]
    categories: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PerturbArgs {
    /// IDX image file.
    #[arg(long)]
    images: PathBuf,
    /// IDX label file, copied through when `--out-labels` is given.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    kind: PerturbKind,
    #[arg(long)]
    severity: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, requires = "labels")]
    out_labels: Option<PathBuf>,
}

#[derive(Args)]
struct SimilarityArgs {
    /// Directory of IDX image files.
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    /// Output directory; the config's `output_dir`, then `damia-out`, when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    records: PathBuf,
    /// Markdown file to write; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let (config, scenario, seed) = a.data.resolve()?;
    let method = config.methods[0];
    let train_config = damia_core::TrainConfig {
        seed,
        ..config.train.clone()
    };
    let artifact = match (method, scenario.source) {
        (Method::Baseline, _) => train_baseline(&scenario.target, &train_config)?,
        (_, Some(source)) => train(&DaJob::new(source, &scenario.target, method, train_config)?)?,
        (_, None) => return Err(Error::Config("DA methods need a source domain".into())),
    };
    save_model(&a.out, &artifact.model, method)?;
    let acc = |d| accuracy(&artifact.model, d).map(|v| v.unwrap_or(f64::NAN));
    println!(
        "{method}: target train acc {:.4}, target test acc {:.4}, {} epochs -> {}",
        acc(&scenario.target.train)?,
        acc(&scenario.target.non_train)?,
        artifact.history.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_attack(a: &AttackArgs) -> Result<()> {
    let report = match (&a.scores, &a.model, &a.config) {
        (Some(path), _, _) => fit_threshold(&ScoreSet::load(path)?)?,
        (None, Some(model), Some(config)) => {
            let data = DataArgs {
                config: config.clone(),
                overrides: a.overrides.clone(),
                point: a.point,
            };
            let (_, scenario, _) = data.resolve()?;
            let (model, _) = load_model(model)?;
            let split: &Split = match a.side {
                Side::Target => &scenario.target,
                Side::Source => scenario
                    .source
                    .as_ref()
                    .ok_or_else(|| Error::Config("no source domain".into()))?,
            };
            attack_split(&model, split)?
        }
        _ => return Err(Error::Argument("give --scores, or --model with --config".into())),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_metrics(a: &MetricsArgs) -> Result<()> {
    let (_, scenario, _) = a.data.resolve()?;
    let (model, _) = load_model(&a.model)?;
    let categories = if a.categories.is_empty() {
        (0..scenario.target.n_categories()).collect()
    } else {
        a.categories.clone()
    };
    write_all(&model, &scenario.target, &categories, &a.out)?;
    println!("wrote metrics to {}", a.out.display());
    Ok(())
}

fn cmd_perturb(a: &PerturbArgs) -> Result<()> {
    let data = match &a.labels {
        Some(labels) => load_idx(&a.images, labels)?,
        None => load_idx_images(&a.images, 1)?,
    };
    let severity = a.severity.unwrap_or_else(|| a.kind.default_severity());
    let out = perturb(&data, a.kind, severity, &mut Rng::new(a.seed))?;
    save_idx(&out, &a.out, a.out_labels.as_deref())?;
    println!("{} images -> {} ({} @ {severity})", out.len(), a.out.display(), a.kind);
    Ok(())
}

fn cmd_similarity(a: &SimilarityArgs) -> Result<()> {
    let s = similarity(&load_image_dir(&a.a)?, &load_image_dir(&a.b)?)?;
    println!("{s:.6}");
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<()> {
    let config = a.overrides.apply(ExperimentConfig::load(&a.config)?)?;
    let out_dir = a
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("damia-out"));
    let out = run_and_write(&config, &out_dir)?;
    print!("{}", render_markdown(&summarize(&out.records)));
    if !out.failures.is_empty() {
        eprintln!("{} run(s) failed; see {}", out.failures.len(), out_dir.join("failures.csv").display());
    }
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let md = render_markdown(&summarize(&load_records(&a.records)?));
    match &a.out {
        Some(path) => write_text(path, &md),
        None => {
            print!("{md}");
            Ok(())
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors exit with status 2 inside `parse`.
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Perturb(a) => cmd_perturb(a),
        Command::Similarity(a) => cmd_similarity(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
