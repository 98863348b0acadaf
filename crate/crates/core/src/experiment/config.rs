use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adamizer::AdamizeParams;
use crate::data::{PreprocessConfig, SynthConfig};
use crate::engine::{EvalSchedule, TrainConfig};
use crate::error::{Error, Result};
use crate::recsys::RecommenderSettings;

/// A scalar or a list in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProblemConfig {
    Quadratic {
        centers: Vec<Vec<f64>>,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default = "one")]
        dataset_size: usize,
        #[serde(default = "unit")]
        init_scale: f64,
    },
    Recommender {
        data: DataSource,
        #[serde(default)]
        preprocess: PreprocessConfig,
        #[serde(default)]
        model: RecommenderSettings,
    },
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// Generated from the run's base seed.
    Synthetic(SynthConfig),
    /// Paths are relative to the config file.
    Files {
        ratings: PathBuf,
        prices: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamizeSettings {
    #[serde(default = "beta1")]
    pub beta1: f64,
    #[serde(default = "beta2")]
    pub beta2: f64,
    #[serde(default = "epsilon")]
    pub epsilon: f64,
}

fn beta1() -> f64 {
    AdamizeParams::default().beta1
}

fn beta2() -> f64 {
    AdamizeParams::default().beta2
}

fn epsilon() -> f64 {
    AdamizeParams::default().epsilon
}

impl Default for AdamizeSettings {
    fn default() -> Self {
        Self {
            beta1: beta1(),
            beta2: beta2(),
            epsilon: epsilon(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    /// One rate or a list swept over.
    pub learning_rate: OneOrMany<f64>,
    /// Evaluate every n steps instead of once per epoch.
    #[serde(default)]
    pub eval_every: Option<usize>,
    #[serde(default)]
    pub reset_moments_each_epoch: bool,
    #[serde(default = "stationarity_tol")]
    pub stationarity_tol: f64,
    #[serde(default)]
    pub adamize: AdamizeSettings,
}

fn stationarity_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub seeds: Vec<u64>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
}

fn default_lambdas() -> Vec<f64> {
    vec![1.0]
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            lambdas: default_lambdas(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub train: TrainSettings,
    #[serde(default)]
    pub sweep: SweepSettings,
    pub output_dir: PathBuf,
    /// Cutoff for the top-k recommender metrics.
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    10
}

impl ExperimentConfig {
    /// Parses and validates; relative data paths are resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let ProblemConfig::Recommender {
            data: DataSource::Files { ratings, prices },
            ..
        } = &mut config.problem
        {
            for p in [ratings, prices] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn learning_rates(&self) -> Vec<f64> {
        self.train.learning_rate.to_vec()
    }

    pub fn validate(&self) -> Result<()> {
        let rates = self.learning_rates();
        if rates.is_empty() {
            return Err(Error::config("learning_rate", "needs at least one value"));
        }
        if self.sweep.seeds.is_empty() {
            return Err(Error::config("sweep.seeds", "needs at least one value"));
        }
        if self.sweep.lambdas.is_empty() {
            return Err(Error::config("sweep.lambdas", "needs at least one value"));
        }
        for &lambda in &self.sweep.lambdas {
            if !(0.0..=1.0).contains(&lambda) {
                return Err(Error::config("sweep.lambdas", format!("{lambda} not in [0, 1]")));
            }
        }
        if self.k == 0 {
            return Err(Error::config("k", "must be >= 1"));
        }
        for lr in rates {
            self.train_config(lr, 0, None)?.validate()?;
        }
        match &self.problem {
            ProblemConfig::Quadratic { centers, noise_sigma, .. } => {
                if centers.len() < 2 {
                    return Err(Error::config("problem.centers", "need at least 2 centers"));
                }
                if !(*noise_sigma >= 0.0) {
                    return Err(Error::config("problem.noise_sigma", "must be >= 0"));
                }
            }
            ProblemConfig::Recommender { data, model, .. } => {
                model.validate()?;
                if let DataSource::Synthetic(s) = data {
                    s.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Engine configuration for one run; `lambda = None` is the vanilla variant.
    pub fn train_config(&self, learning_rate: f64, seed: u64, lambda: Option<f64>) -> Result<TrainConfig> {
        let a = self.train.adamize;
        Ok(TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate,
            adamize_on: lambda.is_some(),
            adamize: AdamizeParams {
                beta1: a.beta1,
                beta2: a.beta2,
                lambda: lambda.unwrap_or(1.0),
                epsilon: a.epsilon,
            },
            reset_moments_each_epoch: self.train.reset_moments_each_epoch,
            stationarity_tol: self.train.stationarity_tol,
            seed,
            eval_schedule: match self.train.eval_every {
                Some(n) => EvalSchedule::EveryBatches(n),
                None => EvalSchedule::PerEpoch,
            },
        })
    }

    /// SHA-256 of the canonical JSON serialization, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// Configuration of the `synth-data` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthDataConfig {
    #[serde(flatten)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
}

impl SynthDataConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: SynthDataConfig = serde_json::from_str(&text)?;
        config.synth.validate()?;
        Ok(config)
    }
}
