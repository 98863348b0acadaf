use std::fs;
use std::path::{Path, PathBuf};

use log::{error, info};
use rayon::prelude::*;
use serde::Serialize;

use super::config::{DataSource, ExperimentConfig, ProblemConfig};
use crate::data::{prepare_dataset, read_prices, synth_dataset, RatingsTable, SplitDataset};
use crate::engine::{train, TrainHistory, TrainOutcome};
use crate::error::{Error, Result};
use crate::numerics::derive_seed;
use crate::pareto::{non_dominated_filter, write_front_csv, ParetoFront, ParetoPoint};
use crate::problems::{MultiObjectiveProblem, QuadraticProblem};
use crate::recsys::RecommenderProblem;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MERGED_FRONT_FILE: &str = "merged_front.csv";
pub const RUN_FRONT_FILE: &str = "front.csv";
pub const HISTORY_FILE: &str = "history.csv";
pub const RUN_RECORD_FILE: &str = "run.json";
pub const FAILURE_FILE: &str = "failure.json";

/// One training run of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub variant: String,
    pub learning_rate: f64,
    pub sweep_seed: u64,
    pub run_seed: u64,
    pub lambda: Option<f64>,
    /// Relative to the output directory.
    pub dir: PathBuf,
}

/// Vanilla first, then one adamized variant per lambda.
pub fn variant_names(lambdas: &[f64]) -> Vec<(String, Option<f64>)> {
    let mut out = vec![("vanilla".to_string(), None)];
    if let [lambda] = lambdas {
        out.push(("adamized".to_string(), Some(*lambda)));
    } else {
        out.extend(lambdas.iter().map(|&l| (format!("adamized_lambda{l}"), Some(l))));
    }
    out
}

/// Every run of the sweep in a fixed order.
pub fn plan_runs(config: &ExperimentConfig, base_seed: u64) -> Vec<RunSpec> {
    let mut runs = Vec::new();
    for (variant, lambda) in variant_names(&config.sweep.lambdas) {
        for &lr in &config.learning_rates() {
            for &seed in &config.sweep.seeds {
                runs.push(RunSpec {
                    dir: Path::new(&variant).join("runs").join(format!("lr{lr}_seed{seed}")),
                    variant: variant.clone(),
                    learning_rate: lr,
                    sweep_seed: seed,
                    run_seed: derive_seed(base_seed, seed),
                    lambda,
                });
            }
        }
    }
    runs
}

/// Problem built once per experiment and shared by every run.
pub enum BuiltProblem {
    Quadratic(QuadraticProblem),
    Recommender(Box<RecommenderProblem>, Box<SplitDataset>),
}

impl BuiltProblem {
    pub fn metric_names(&self) -> Vec<String> {
        match self {
            BuiltProblem::Quadratic(p) => p.objective_names(),
            BuiltProblem::Recommender(p, _) => p.metric_names(),
        }
    }

    pub fn objective_names(&self) -> Vec<String> {
        match self {
            BuiltProblem::Quadratic(p) => p.objective_names(),
            BuiltProblem::Recommender(p, _) => p.objective_names(),
        }
    }
}

/// Loads or generates the data and constructs the problem. The data seed is
/// the base seed.
pub fn build_problem(config: &ExperimentConfig, base_seed: u64) -> Result<BuiltProblem> {
    match &config.problem {
        ProblemConfig::Quadratic {
            centers,
            noise_sigma,
            dataset_size,
            init_scale,
        } => Ok(BuiltProblem::Quadratic(
            QuadraticProblem::new(centers.clone(), *noise_sigma)?
                .with_dataset_size(*dataset_size)
                .with_init_scale(*init_scale),
        )),
        ProblemConfig::Recommender {
            data,
            preprocess,
            model,
        } => {
            let (table, prices) = match data {
                DataSource::Synthetic(s) => {
                    let d = synth_dataset(s, base_seed)?;
                    let prices = d.price_map();
                    (d.ratings, prices)
                }
                DataSource::Files { ratings, prices } => {
                    (RatingsTable::from_csv(ratings)?, read_prices(prices)?)
                }
            };
            let split = prepare_dataset(&table, &prices, *preprocess, base_seed)?;
            let mut settings = model.clone();
            settings.k = config.k;
            let problem = RecommenderProblem::new(
                settings,
                split.train.clone(),
                split.validation.clone(),
                split.weights.clone(),
            )?;
            Ok(BuiltProblem::Recommender(Box::new(problem), Box::new(split)))
        }
    }
}

pub fn train_run(problem: &BuiltProblem, config: &ExperimentConfig, spec: &RunSpec) -> Result<TrainOutcome> {
    let tc = config.train_config(spec.learning_rate, spec.run_seed, spec.lambda)?;
    match problem {
        BuiltProblem::Quadratic(p) => train(p, &tc),
        BuiltProblem::Recommender(p, _) => train(p.as_ref(), &tc),
    }
}

#[derive(Debug, Clone, Serialize)]
struct RunRecord<'a> {
    variant: &'a str,
    learning_rate: f64,
    seed: u64,
    run_seed: u64,
    lambda: Option<f64>,
    objectives: Vec<String>,
    metrics: Vec<String>,
    baseline_losses: &'a [f64],
    terminal_d_norm: Option<f64>,
    archive: Vec<ArchiveEntry<'a>>,
}

#[derive(Debug, Clone, Serialize)]
struct ArchiveEntry<'a> {
    tag: &'a str,
    values: &'a [f64],
}

#[derive(Debug, Clone, Serialize)]
struct Failure {
    error: String,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn write_history_csv(path: &Path, objectives: &[String], metrics: &[String], history: &TrainHistory) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header: Vec<String> = ["epoch", "batch", "step", "terminal", "d_norm"]
        .map(String::from)
        .to_vec();
    header.extend(objectives.iter().map(|n| format!("loss_{n}")));
    header.extend(metrics.iter().map(|n| format!("metric_{n}")));
    header.extend(objectives.iter().map(|n| format!("alpha_{n}")));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for r in &history.records {
        let mut row = vec![
            r.epoch.to_string(),
            r.batch.to_string(),
            r.step.to_string(),
            r.terminal.to_string(),
            format!("{:?}", r.d_norm),
        ];
        row.extend(r.losses.iter().chain(&r.metrics).chain(&r.alphas).map(|v| format!("{v:?}")));
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Files written for one run, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunEntry {
    pub learning_rate: f64,
    pub seed: u64,
    pub run_seed: u64,
    pub lambda: Option<f64>,
    pub status: &'static str,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantEntry {
    pub name: String,
    pub lambda: Option<f64>,
    pub merged_front: String,
    pub runs: Vec<RunEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub toolkit_version: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub objectives: Vec<String>,
    pub metrics: Vec<String>,
    pub data_files: Vec<String>,
    pub variants: Vec<VariantEntry>,
}

/// Outcome of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub manifest: RunManifest,
    /// Merged front per variant, in manifest order.
    pub merged_fronts: Vec<(String, ParetoFront)>,
    pub failures: usize,
}

fn rel_string(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Runs every variant over the sweep with at most `jobs` runs in parallel
/// and writes per-run outputs, merged fronts and the manifest.
pub fn run_experiment(config: &ExperimentConfig, base_seed: u64, jobs: usize) -> Result<ExperimentSummary> {
    config.validate()?;
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let problem = build_problem(config, base_seed)?;
    let objectives = problem.objective_names();
    let metrics = problem.metric_names();

    let mut data_files = Vec::new();
    if let BuiltProblem::Recommender(_, split) = &problem {
        let dir = out.join("data");
        split.write_artifacts(&dir)?;
        data_files = split
            .manifest()
            .files
            .iter()
            .map(|f| format!("data/{f}"))
            .chain(["data/split_manifest.json".to_string()])
            .collect();
    }

    let runs = plan_runs(config, base_seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))?;
    info!("running {} runs with {} job(s)", runs.len(), jobs.max(1));
    let results: Vec<Result<Vec<ParetoPoint>>> = pool.install(|| {
        runs.par_iter()
            .map(|spec| execute_run(&problem, config, spec, &objectives, &metrics))
            .collect()
    });

    let mut variants = Vec::new();
    let mut merged_fronts = Vec::new();
    let mut failures = 0;
    for (name, lambda) in variant_names(&config.sweep.lambdas) {
        let mut points = Vec::new();
        let mut entries = Vec::new();
        for (spec, result) in runs.iter().zip(&results).filter(|(s, _)| s.variant == name) {
            let dir = rel_string(&spec.dir);
            let (status, files) = match result {
                Ok(front) => {
                    points.extend(front.iter().cloned());
                    ("ok", vec![RUN_FRONT_FILE, HISTORY_FILE, RUN_RECORD_FILE])
                }
                Err(_) => {
                    failures += 1;
                    ("failed", vec![FAILURE_FILE])
                }
            };
            entries.push(RunEntry {
                learning_rate: spec.learning_rate,
                seed: spec.sweep_seed,
                run_seed: spec.run_seed,
                lambda: spec.lambda,
                status,
                files: files.iter().map(|f| format!("{dir}/{f}")).collect(),
            });
        }
        let mut merged = non_dominated_filter(&points)?;
        merged.sort_by_first_axis();
        let merged_path = Path::new(&name).join(MERGED_FRONT_FILE);
        write_front_csv(&out.join(&merged_path), &metrics, &merged)?;
        variants.push(VariantEntry {
            name: name.clone(),
            lambda,
            merged_front: rel_string(&merged_path),
            runs: entries,
        });
        merged_fronts.push((name, merged));
    }

    let manifest = RunManifest {
        toolkit_version: TOOLKIT_VERSION,
        config_hash: config.hash()?,
        seed: base_seed,
        objectives,
        metrics,
        data_files,
        variants,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(ExperimentSummary {
        manifest,
        merged_fronts,
        failures,
    })
}

fn execute_run(
    problem: &BuiltProblem,
    config: &ExperimentConfig,
    spec: &RunSpec,
    objectives: &[String],
    metrics: &[String],
) -> Result<Vec<ParetoPoint>> {
    let dir = config.output_dir.join(&spec.dir);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    // Stale outputs from an earlier run would otherwise survive a failure.
    for f in [RUN_FRONT_FILE, HISTORY_FILE, RUN_RECORD_FILE, FAILURE_FILE] {
        let _ = fs::remove_file(dir.join(f));
    }
    let result = train_run(problem, config, spec).and_then(|outcome| {
        let mut front = outcome.archive.front();
        front.sort_by_first_axis();
        write_front_csv(&dir.join(RUN_FRONT_FILE), metrics, &front)?;
        write_history_csv(&dir.join(HISTORY_FILE), objectives, metrics, &outcome.history)?;
        let record = RunRecord {
            variant: &spec.variant,
            learning_rate: spec.learning_rate,
            seed: spec.sweep_seed,
            run_seed: spec.run_seed,
            lambda: spec.lambda,
            objectives: objectives.to_vec(),
            metrics: metrics.to_vec(),
            baseline_losses: outcome.baseline.initial_losses(),
            terminal_d_norm: outcome.history.terminal().map(|r| r.d_norm),
            archive: outcome
                .archive
                .entries()
                .iter()
                .map(|(p, tag)| ArchiveEntry {
                    tag,
                    values: p.values(),
                })
                .collect(),
        };
        write_json(&dir.join(RUN_RECORD_FILE), &record)?;
        Ok(front.points().to_vec())
    });
    if let Err(e) = &result {
        error!("run {} failed: {e}", rel_string(&spec.dir));
        write_json(&dir.join(FAILURE_FILE), &Failure { error: e.to_string() })?;
    }
    result
}
