//! Stochastic multi-gradient descent with per-objective gradient
//! normalization and optional Adam-style smoothing.
//!
//! Per batch: compute every objective's loss and gradient, divide each
//! gradient by that objective's loss at initialization, optionally smooth it
//! with the objective's own [`MomentState`], solve for the min-norm simplex
//! weights and step against the combined direction. With `adamize_on = false`
//! this is plain stochastic MGDA; with one batch per epoch it is MGDA.

mod archive;

pub use archive::{update_pareto_archive, ParetoArchive};

use log::{debug, warn};

use crate::adamizer::{AdamizeParams, MomentState};
use crate::combiner::{combine, solve_min_norm, GradientSet};
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, norm, RngStream};
use crate::problems::MultiObjectiveProblem;

/// Smallest accepted normalization baseline; vanishing initial losses are
/// floored to this value.
pub const MIN_BASELINE: f64 = 1e-12;

const STREAM_INIT: u64 = 1;
const STREAM_BATCHES: u64 = 2;
const STREAM_STEPS: u64 = 3;
const STREAM_BASELINE: u64 = 4;

/// Initial per-objective losses used to rescale gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationBaseline {
    initial_losses: Vec<f64>,
}

impl NormalizationBaseline {
    pub fn new(initial_losses: Vec<f64>) -> Result<Self> {
        if let Some(bad) = initial_losses.iter().find(|l| !(**l >= MIN_BASELINE && l.is_finite())) {
            return Err(Error::invalid(
                "baseline",
                format!("initial loss {bad} below floor {MIN_BASELINE}"),
            ));
        }
        Ok(Self { initial_losses })
    }

    pub fn initial_losses(&self) -> &[f64] {
        &self.initial_losses
    }
}

/// `g / baseline`. Errors when the baseline is below [`MIN_BASELINE`].
pub fn normalize_gradient(g: &[f64], baseline: f64) -> Result<Vec<f64>> {
    if !(baseline >= MIN_BASELINE) || !baseline.is_finite() {
        return Err(Error::invalid(
            "baseline",
            format!("{baseline} is below the floor {MIN_BASELINE}"),
        ));
    }
    Ok(g.iter().map(|v| v / baseline).collect())
}

/// Evaluates every objective once at `w` on the problem's reference batch.
/// Losses below the floor are raised to it with a warning.
pub fn capture_baseline<P: MultiObjectiveProblem>(
    problem: &P,
    w: &[f64],
    seed: u64,
) -> Result<NormalizationBaseline> {
    let batch = problem.reference_batch();
    let names = problem.objective_names();
    let mut losses = Vec::with_capacity(problem.num_objectives());
    for i in 0..problem.num_objectives() {
        let loss = problem.loss(i, w, &batch, derive_seed(seed, i as u64))?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("initial loss of objective `{}`", names[i])));
        }
        if loss < MIN_BASELINE {
            warn!(
                "initial loss of objective `{}` is {loss}; flooring normalization baseline to {MIN_BASELINE}",
                names[i]
            );
            losses.push(MIN_BASELINE);
        } else {
            losses.push(loss);
        }
    }
    NormalizationBaseline::new(losses)
}

/// When to evaluate the model and update the archive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSchedule {
    /// Before the first batch of every epoch.
    PerEpoch,
    /// Before every `n`-th global step.
    EveryBatches(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adamize_on: bool,
    pub adamize: AdamizeParams,
    /// Zero the moment estimates at the start of every epoch.
    pub reset_moments_each_epoch: bool,
    pub stationarity_tol: f64,
    pub seed: u64,
    pub eval_schedule: EvalSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 128,
            learning_rate: 0.01,
            adamize_on: false,
            adamize: AdamizeParams::default(),
            reset_moments_each_epoch: false,
            stationarity_tol: 1e-3,
            seed: 0,
            eval_schedule: EvalSchedule::PerEpoch,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be finite and >= 0"));
        }
        if let EvalSchedule::EveryBatches(0) = self.eval_schedule {
            return Err(Error::config("eval_every", "must be >= 1"));
        }
        if !(self.stationarity_tol >= 0.0) {
            return Err(Error::config("stationarity_tol", "must be >= 0"));
        }
        if self.adamize_on {
            self.adamize.validate().map_err(|e| match e {
                Error::InvalidParameter { name, reason } => Error::config(name, reason),
                other => other,
            })?;
        }
        Ok(())
    }
}

/// One evaluation point of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub epoch: usize,
    pub batch: usize,
    pub step: usize,
    /// Batch losses at the evaluated parameters (reference-batch losses for
    /// the terminal record).
    pub losses: Vec<f64>,
    pub metrics: Vec<f64>,
    pub alphas: Vec<f64>,
    pub d_norm: f64,
    /// Set on the record taken after the last update, whose `alphas` and
    /// `d_norm` come from unsmoothed reference-batch gradients.
    pub terminal: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<TrainRecord>,
}

impl TrainHistory {
    pub fn terminal(&self) -> Option<&TrainRecord> {
        self.records.last().filter(|r| r.terminal)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub archive: ParetoArchive,
    pub history: TrainHistory,
    pub params: Vec<f64>,
    pub baseline: NormalizationBaseline,
}

/// Result of combining one set of normalized gradients.
#[derive(Debug, Clone)]
pub struct CombinedStep {
    pub losses: Vec<f64>,
    pub alphas: Vec<f64>,
    pub direction: Vec<f64>,
}

/// Normalized min-norm direction on the reference batch at `w`, without
/// touching any moment state.
pub fn stationarity_probe<P: MultiObjectiveProblem>(
    problem: &P,
    w: &[f64],
    baseline: &NormalizationBaseline,
    seed: u64,
) -> Result<CombinedStep> {
    let batch = problem.reference_batch();
    let evaluated = problem.losses_and_grads(w, &batch, seed)?;
    let (losses, grads): (Vec<f64>, Vec<Vec<f64>>) = evaluated.into_iter().unzip();
    let grads = grads
        .iter()
        .zip(baseline.initial_losses())
        .map(|(g, &b)| normalize_gradient(g, b))
        .collect::<Result<Vec<_>>>()?;
    let set = GradientSet::new(grads)?;
    let weights = solve_min_norm(&set)?;
    let direction = combine(&set, &weights)?;
    Ok(CombinedStep {
        losses,
        alphas: weights.into_vec(),
        direction,
    })
}

fn check_finite_losses(losses: &[f64], names: &[String]) -> Result<()> {
    if let Some(i) = losses.iter().position(|l| !l.is_finite()) {
        return Err(Error::NonFinite(format!("loss of objective `{}`", names[i])));
    }
    Ok(())
}

fn descent_step<P: MultiObjectiveProblem>(
    problem: &P,
    w: &[f64],
    batch: &P::Batch,
    seed: u64,
    baseline: &NormalizationBaseline,
    moments: Option<&mut [MomentState]>,
    names: &[String],
) -> Result<CombinedStep> {
    let evaluated = problem.losses_and_grads(w, batch, seed)?;
    let (losses, raw): (Vec<f64>, Vec<Vec<f64>>) = evaluated.into_iter().unzip();
    check_finite_losses(&losses, names)?;
    let mut grads = Vec::with_capacity(raw.len());
    for (i, g) in raw.iter().enumerate() {
        if g.len() != problem.dim() {
            return Err(Error::LengthMismatch {
                expected: problem.dim(),
                actual: g.len(),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of objective `{}`", names[i])));
        }
        grads.push(normalize_gradient(g, baseline.initial_losses()[i])?);
    }
    if let Some(states) = moments {
        for (g, state) in grads.iter_mut().zip(states.iter_mut()) {
            *g = state.adamize(g)?;
        }
    }
    let set = GradientSet::new(grads)?;
    let weights = solve_min_norm(&set)?;
    let direction = combine(&set, &weights)?;
    Ok(CombinedStep {
        losses,
        alphas: weights.into_vec(),
        direction,
    })
}

fn should_evaluate(schedule: EvalSchedule, batch: usize, step: usize) -> bool {
    match schedule {
        EvalSchedule::PerEpoch => batch == 0,
        EvalSchedule::EveryBatches(n) => step % n == 0,
    }
}

/// Runs the training loop and returns the per-run archive and history.
pub fn train<P: MultiObjectiveProblem>(problem: &P, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let n = problem.num_objectives();
    let names = problem.objective_names();
    let mut w = problem.init_params(derive_seed(config.seed, STREAM_INIT));
    if w.len() != problem.dim() {
        return Err(Error::LengthMismatch {
            expected: problem.dim(),
            actual: w.len(),
        });
    }
    let baseline = capture_baseline(problem, &w, derive_seed(config.seed, STREAM_BASELINE))?;
    debug!("normalization baselines {:?}", baseline.initial_losses());

    let mut moments = if config.adamize_on {
        Some(
            (0..n)
                .map(|_| MomentState::with_params(problem.dim(), config.adamize))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };

    let mut batch_rng = RngStream::new(derive_seed(config.seed, STREAM_BATCHES));
    let step_seed = derive_seed(config.seed, STREAM_STEPS);
    let mut archive = ParetoArchive::new();
    let mut history = TrainHistory::default();
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        if config.reset_moments_each_epoch {
            if let Some(states) = moments.as_mut() {
                states.iter_mut().for_each(MomentState::reset);
            }
        }
        let batches = problem.batches(&mut batch_rng, config.batch_size);
        for (b, batch) in batches.iter().enumerate() {
            let wrap = |e: Error| Error::Training {
                epoch,
                batch: b,
                source: Box::new(e),
            };
            let evaluate = should_evaluate(config.eval_schedule, b, step);
            let metrics = if evaluate {
                let point = problem.eval_metrics(&w).map_err(wrap)?;
                archive
                    .update(point.clone(), format!("epoch{epoch}-batch{b}"))
                    .map_err(wrap)?;
                Some(point)
            } else {
                None
            };

            let combined = descent_step(
                problem,
                &w,
                batch,
                derive_seed(step_seed, step as u64),
                &baseline,
                moments.as_deref_mut(),
                &names,
            )
            .map_err(wrap)?;

            if let Some(point) = metrics {
                history.records.push(TrainRecord {
                    epoch,
                    batch: b,
                    step,
                    losses: combined.losses.clone(),
                    metrics: point.into(),
                    alphas: combined.alphas.clone(),
                    d_norm: norm(&combined.direction),
                    terminal: false,
                });
            }

            for (wi, di) in w.iter_mut().zip(&combined.direction) {
                *wi -= config.learning_rate * di;
            }
            step += 1;
        }
    }

    let wrap_final = |e: Error| Error::Training {
        epoch: config.epochs,
        batch: 0,
        source: Box::new(e),
    };
    let point = problem.eval_metrics(&w).map_err(wrap_final)?;
    archive
        .update(point.clone(), format!("epoch{}-final", config.epochs))
        .map_err(wrap_final)?;
    let probe = stationarity_probe(problem, &w, &baseline, derive_seed(config.seed, STREAM_BASELINE))
        .map_err(wrap_final)?;
    let d_norm = norm(&probe.direction);
    if d_norm <= config.stationarity_tol {
        debug!("terminal point is Pareto stationary (|d| = {d_norm:e})");
    }
    history.records.push(TrainRecord {
        epoch: config.epochs,
        batch: 0,
        step,
        losses: probe.losses,
        metrics: point.into(),
        alphas: probe.alphas,
        d_norm,
        terminal: true,
    });

    Ok(TrainOutcome {
        archive,
        history,
        params: w,
        baseline,
    })
}
