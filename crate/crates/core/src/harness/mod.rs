//! Experiment orchestration.
//!
//! Every `(sweep point, seed, method)` triple is an independent job that
//! builds its own copies of the data, trains one model and measures it. Jobs
//! may run in parallel; results are merged in config order (sweep points
//! outermost, then seeds, then methods) regardless of completion order.
//!
//! The sensitive dataset is always the target. DA trainers receive it only
//! through [`DaJob::new`], which strips labels; target labels reach only the
//! evaluator and the baseline.

mod config;
mod records;
mod report;

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

pub use config::{
    DataSource, ExperimentConfig, ExperimentKind, IdxPair, IdxSource, PerturbSpec, SweepConfig,
    CONFIG_VERSION,
};
pub use records::{
    load_records, read_records, write_failures, write_records, FailureRecord, RunRecord,
    FAILURE_COLUMNS, RECORD_COLUMNS,
};
pub use report::{median, render_markdown, summarize, SummaryRow};

use crate::attack::attack_split;
use crate::da::{train, train_baseline, DaJob, Method, TrainedArtifact};
use crate::domain::{
    load_idx, mix, perturb, similarity, subset_per_category, synth_related_domains,
    synth_two_domains, Domain, Split, SynthSpec, SynthWorld,
};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, generalization_errors, mean_pred_l1};
use crate::numcore::{Rng, TrainConfig};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "DAMIA_THREADS";

/// Random stream offsets for data preparation, disjoint from trainer streams.
const SPLIT_STREAM: u64 = 7000;
const SUBSET_STREAM: u64 = 8000;
const PERTURB_STREAM: u64 = 9000;
/// Stream of the fresh target-distribution draw used as a similar source.
const FRESH_STREAM: u64 = 7;

#[derive(Clone, Debug, PartialEq)]
pub enum SweepPoint {
    Plain,
    Size(usize),
    Mix(Vec<usize>),
    Perturb(PerturbSpec),
}

impl SweepPoint {
    pub fn label(&self) -> String {
        match self {
            SweepPoint::Plain => "-".into(),
            SweepPoint::Size(k) => format!("k={k}"),
            SweepPoint::Mix(ids) => format!(
                "mix={}",
                ids.iter().map(usize::to_string).collect::<Vec<_>>().join("+")
            ),
            SweepPoint::Perturb(p) => format!("{}@{}", p.kind, p.severity()),
        }
    }
}

pub fn sweep_points(config: &ExperimentConfig) -> Vec<SweepPoint> {
    let s = &config.sweep;
    match config.kind {
        ExperimentKind::Q1Effectiveness | ExperimentKind::Q2Methods => vec![SweepPoint::Plain],
        ExperimentKind::Q3Size => s.size_levels.iter().map(|&k| SweepPoint::Size(k)).collect(),
        ExperimentKind::Q3Diversity => s.compositions.iter().cloned().map(SweepPoint::Mix).collect(),
        ExperimentKind::Q3Similarity => s.perturbations.iter().map(|&p| SweepPoint::Perturb(p)).collect(),
    }
}

/// Source and target for one job. `source` is `None` only for idx data
/// without source files, which only the baseline can use.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub source: Option<Split>,
    pub target: Split,
    pub diversity: usize,
}

fn rename(split: Split, name: &str) -> Split {
    Split {
        train: split.train.with_name(name),
        non_train: split.non_train.with_name(name),
        train_fraction: split.train_fraction,
    }
}

fn perturb_split(split: &Split, p: &PerturbSpec, rng: &mut Rng) -> Result<Split> {
    let name = format!("{}~{}", split.name(), p.kind);
    Ok(Split {
        train: perturb(&split.train, p.kind, p.severity(), rng)?.with_name(name.clone()),
        non_train: perturb(&split.non_train, p.kind, p.severity(), rng)?.with_name(name),
        train_fraction: split.train_fraction,
    })
}

fn mix_splits(pool: &[Split], ids: &[usize]) -> Result<Split> {
    let mut train = pool[ids[0]].train.clone();
    let mut non_train = pool[ids[0]].non_train.clone();
    for &i in &ids[1..] {
        train = mix(&train, &pool[i].train)?;
        non_train = mix(&non_train, &pool[i].non_train)?;
    }
    let name = if ids.len() == 1 {
        pool[ids[0]].name().to_string()
    } else {
        format!(
            "Mix({})",
            ids.iter().map(|&i| pool[i].name()).collect::<Vec<_>>().join("+")
        )
    };
    Ok(rename(Split::from_parts(train, non_train)?, &name))
}

fn subset_source(source: Split, k: usize, seed: u64) -> Result<Split> {
    let train = subset_per_category(&source.train, k, &mut Rng::derive(seed, SUBSET_STREAM))?;
    Split::from_parts(train, source.non_train)
}

fn load_split(pair: &IdxPair, fraction: f64, seed: u64, stream: u64) -> Result<Split> {
    let data = load_idx(&pair.images, &pair.labels)?;
    Split::new(&data, fraction, &mut Rng::derive(seed, stream))
}

/// Builds the data of one job. Synthetic data is drawn with base seed
/// `spec.seed + seed`, so every run seed sees a fresh draw.
pub fn build_scenario(config: &ExperimentConfig, point: &SweepPoint, seed: u64) -> Result<Scenario> {
    match &config.data {
        DataSource::Synthetic(spec) => {
            let spec = SynthSpec {
                seed: spec.seed.wrapping_add(seed),
                ..spec.clone()
            };
            let data_seed = spec.seed;
            let (source, target) = synth_two_domains(&spec)?;
            let (source, diversity) = match point {
                SweepPoint::Plain => (source, 1),
                SweepPoint::Size(k) => (subset_source(source, *k, data_seed)?, 1),
                SweepPoint::Mix(ids) => {
                    let pool = synth_related_domains(&spec, &config.sweep.pool_shifts)?;
                    (mix_splits(&pool, ids)?, ids.len())
                }
                SweepPoint::Perturb(p) => {
                    let world = SynthWorld::new(&spec)?;
                    let fresh = world.domain("target", spec.domain_shift, 0, spec.n_per_class, FRESH_STREAM)?;
                    (perturb_split(&fresh, p, &mut Rng::derive(data_seed, PERTURB_STREAM))?, 1)
                }
            };
            Ok(Scenario {
                source: Some(source),
                target,
                diversity,
            })
        }
        DataSource::Idx(idx) => {
            let target = match &idx.target_test {
                Some(test) => Split::from_parts(
                    load_idx(&idx.target.images, &idx.target.labels)?,
                    load_idx(&test.images, &test.labels)?,
                )?,
                None => load_split(&idx.target, idx.train_fraction, seed, SPLIT_STREAM)?,
            };
            let pool = idx
                .sources
                .iter()
                .enumerate()
                .map(|(i, p)| load_split(p, idx.train_fraction, seed, SPLIT_STREAM + 1 + i as u64))
                .collect::<Result<Vec<_>>>()?;
            let first = || {
                pool.first()
                    .cloned()
                    .ok_or_else(|| Error::Config("no idx source dataset".into()))
            };
            let (source, diversity) = match point {
                SweepPoint::Plain => (pool.first().cloned(), 1),
                SweepPoint::Size(k) => (Some(subset_source(first()?, *k, seed)?), 1),
                SweepPoint::Mix(ids) => (Some(mix_splits(&pool, ids)?), ids.len()),
                SweepPoint::Perturb(p) => (
                    Some(perturb_split(&first()?, p, &mut Rng::derive(seed, PERTURB_STREAM))?),
                    1,
                ),
            };
            Ok(Scenario {
                source,
                target,
                diversity,
            })
        }
    }
}

fn domain_similarity(a: &Split, b: &Split) -> Result<Option<f64>> {
    if a.train.image_shape().is_none() || b.train.image_shape().is_none() {
        return Ok(None);
    }
    let da = Domain::single(a.merged()?);
    let db = Domain::single(b.merged()?);
    similarity(&da, &db).map(Some)
}

fn defined(v: Option<f64>, what: &str) -> Result<f64> {
    v.ok_or_else(|| Error::Argument(format!("{what} partition is empty")))
}

/// Trains one model and measures it.
pub fn run_job(config: &ExperimentConfig, point: &SweepPoint, seed: u64, method: Method) -> Result<RunRecord> {
    let started = Instant::now();
    let scenario = build_scenario(config, point, seed)?;
    let target = &scenario.target;
    let train_config = TrainConfig {
        seed,
        ..config.train.clone()
    };

    let (artifact, source): (TrainedArtifact, Option<&Split>) = if method == Method::Baseline {
        (train_baseline(target, &train_config)?, None)
    } else {
        let source = scenario
            .source
            .as_ref()
            .ok_or_else(|| Error::Config("DA methods need a source domain".into()))?;
        let job = DaJob::new(source.clone(), target, method, train_config)?;
        (train(&job)?, Some(source))
    };
    let model = &artifact.model;

    let target_attack = attack_split(model, target)?;
    let source_attack = source.map(|s| attack_split(model, s)).transpose()?;
    let similarity = match source {
        Some(s) => domain_similarity(s, target)?,
        None => None,
    };
    let direction = format!("{}->{}", source.map_or("none", Split::name), target.name());
    Ok(RunRecord {
        method: method.to_string(),
        direction,
        train_acc_target: defined(accuracy(model, &target.train)?, "target train")?,
        test_acc_target: defined(accuracy(model, &target.non_train)?, "target non-train")?,
        mia_acc_target: target_attack.p_inference,
        adv_mi_target: target_attack.adv_mi,
        mia_acc_source: source_attack.as_ref().map(|a| a.p_inference),
        adv_mi_source: source_attack.as_ref().map(|a| a.adv_mi),
        similarity,
        size: source.map(|s| s.train.len()),
        diversity: source.map(|_| scenario.diversity),
        seed,
        wall_time: if config.record_wall_time {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        },
        sweep: point.label(),
        epochs: config.train.epochs,
        mean_gen_error: generalization_errors(model, target)?.mean(),
        mean_pred_l1: mean_pred_l1(model, target)?,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub failures: Vec<FailureRecord>,
}

/// Worker cap from `DAMIA_THREADS`, when set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs every job. A failing job is recorded and the run continues.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let mut jobs = Vec::new();
    for point in sweep_points(config) {
        for &seed in &config.seeds {
            for &method in &config.methods {
                jobs.push((point.clone(), seed, method));
            }
        }
    }
    let work = || -> Vec<_> {
        jobs.par_iter()
            .map(|(point, seed, method)| run_job(config, point, *seed, *method))
            .collect()
    };
    let results = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::State(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut out = ExperimentOutput::default();
    for ((point, seed, method), result) in jobs.iter().zip(results) {
        match result {
            Ok(r) => out.records.push(r),
            Err(e) => {
                log::warn!("{method} {} seed {seed} failed: {e}", point.label());
                out.failures.push(FailureRecord {
                    method: method.to_string(),
                    sweep: point.label(),
                    seed: *seed,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

/// Runs the experiment and writes `records.csv`, `failures.csv`,
/// `summary.md` and the resolved `config.json` into `out_dir`.
pub fn run_and_write(config: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<ExperimentOutput> {
    let out = run_experiment(config)?;
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_records(std::fs::File::create(dir.join("records.csv"))?, &out.records)?;
    write_failures(std::fs::File::create(dir.join("failures.csv"))?, &out.failures)?;
    std::fs::write(dir.join("summary.md"), render_markdown(&summarize(&out.records)))?;
    std::fs::write(dir.join("config.json"), config.to_json()?)?;
    Ok(out)
}
