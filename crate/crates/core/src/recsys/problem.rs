use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{avg_price_at_k, avg_recency_at_k, recall_at_k, top_k, ItemWeights};
use super::model::{Autoencoder, ModelShape, Sampling, WeightedObjective};
use crate::error::{Error, Result};
use crate::numerics::{KahanSum, RngStream};
use crate::pareto::ParetoPoint;
use crate::problems::MultiObjectiveProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecObjective {
    Relevance,
    Revenue,
    Recency,
}

impl RecObjective {
    pub fn name(self) -> &'static str {
        match self {
            RecObjective::Relevance => "relevance",
            RecObjective::Revenue => "revenue",
            RecObjective::Recency => "recency",
        }
    }

    /// Evaluation axis name; the revenue and recency axes are this crate's
    /// own definitions.
    pub fn metric_name(self, k: usize) -> String {
        match self {
            RecObjective::Relevance => format!("recall@{k}"),
            RecObjective::Revenue => format!("avg_price@{k}"),
            RecObjective::Recency => format!("avg_recency@{k}"),
        }
    }
}

/// Held-out evaluation user: input items and the items to recover.
/// Both lists are sorted and disjoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalUser {
    pub fold_in: Vec<u32>,
    pub held_out: Vec<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSplit {
    pub users: Vec<EvalUser>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserBatch {
    pub rows: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommenderSettings {
    #[serde(default = "default_hidden")]
    pub encoder_hidden: Vec<usize>,
    #[serde(default)]
    pub decoder_hidden: Option<Vec<usize>>,
    #[serde(default = "default_latent")]
    pub latent: usize,
    #[serde(default)]
    pub variational: bool,
    /// KL weight on the relevance objective.
    #[serde(default)]
    pub beta: f64,
    /// Input dropout probability during training.
    #[serde(default)]
    pub dropout: f64,
    #[serde(default = "default_objectives")]
    pub objectives: Vec<RecObjective>,
    /// Top-k cutoff; set by the experiment config rather than this section.
    #[serde(skip, default = "default_k")]
    pub k: usize,
}

fn default_hidden() -> Vec<usize> {
    vec![64]
}

fn default_latent() -> usize {
    16
}

fn default_objectives() -> Vec<RecObjective> {
    vec![RecObjective::Relevance, RecObjective::Revenue]
}

fn default_k() -> usize {
    10
}

impl Default for RecommenderSettings {
    fn default() -> Self {
        Self {
            encoder_hidden: default_hidden(),
            decoder_hidden: None,
            latent: default_latent(),
            variational: false,
            beta: 0.0,
            dropout: 0.0,
            objectives: default_objectives(),
            k: default_k(),
        }
    }
}

impl RecommenderSettings {
    pub fn validate(&self) -> Result<()> {
        if self.objectives.len() < 2 {
            return Err(Error::config("objectives", "need at least 2"));
        }
        for (i, a) in self.objectives.iter().enumerate() {
            if self.objectives[..i].contains(a) {
                return Err(Error::config("objectives", format!("duplicate {}", a.name())));
            }
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", "must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", "must lie in [0, 1)"));
        }
        if self.k == 0 {
            return Err(Error::config("k", "must be >= 1"));
        }
        Ok(())
    }

    fn shape(&self, num_items: usize) -> ModelShape {
        ModelShape {
            num_items,
            encoder_hidden: self.encoder_hidden.clone(),
            latent: self.latent,
            decoder_hidden: self
                .decoder_hidden
                .clone()
                .unwrap_or_else(|| self.encoder_hidden.iter().rev().copied().collect()),
            variational: self.variational,
        }
    }
}

/// Autoencoder recommender trained on several weighted reconstruction losses.
#[derive(Debug, Clone)]
pub struct RecommenderProblem {
    model: Autoencoder,
    settings: RecommenderSettings,
    train: Vec<Vec<u32>>,
    validation: EvalSplit,
    weights: ItemWeights,
    loss_weights: Vec<Vec<f64>>,
}

impl RecommenderProblem {
    pub fn new(
        settings: RecommenderSettings,
        train: Vec<Vec<u32>>,
        validation: EvalSplit,
        weights: ItemWeights,
    ) -> Result<Self> {
        settings.validate()?;
        let model = Autoencoder::new(settings.shape(weights.len()))?;
        let train: Vec<Vec<u32>> = train.into_iter().filter(|r| !r.is_empty()).collect();
        if train.is_empty() {
            return Err(Error::Empty("training users"));
        }
        if validation.users.iter().all(|u| u.held_out.is_empty()) {
            return Err(Error::Empty("evaluation split"));
        }
        let num_items = weights.len() as u32;
        let out_of_range = train
            .iter()
            .flatten()
            .chain(validation.users.iter().flat_map(|u| u.fold_in.iter().chain(&u.held_out)))
            .any(|&j| j >= num_items);
        if out_of_range {
            return Err(Error::invalid("interactions", "item index out of range"));
        }
        let loss_weights = settings
            .objectives
            .iter()
            .map(|o| match o {
                RecObjective::Relevance => vec![1.0; weights.len()],
                RecObjective::Revenue => weights.prices().to_vec(),
                RecObjective::Recency => weights.recency_transformed().to_vec(),
            })
            .collect();
        debug!(
            "recommender: {} items, {} train users, {} eval users, {} params",
            weights.len(),
            train.len(),
            validation.users.len(),
            model.num_params()
        );
        Ok(Self {
            model,
            settings,
            train,
            validation,
            weights,
            loss_weights,
        })
    }

    pub fn model(&self) -> &Autoencoder {
        &self.model
    }

    pub fn settings(&self) -> &RecommenderSettings {
        &self.settings
    }

    pub fn item_weights(&self) -> &ItemWeights {
        &self.weights
    }

    pub fn metric_names(&self) -> Vec<String> {
        self.settings
            .objectives
            .iter()
            .map(|o| o.metric_name(self.settings.k))
            .collect()
    }

    fn beta(&self, objective: RecObjective) -> f64 {
        match objective {
            RecObjective::Relevance => self.settings.beta,
            _ => 0.0,
        }
    }

    fn objective(&self, i: usize) -> Result<WeightedObjective<'_>> {
        let o = *self
            .settings
            .objectives
            .get(i)
            .ok_or_else(|| Error::invalid("objective", format!("index {i} out of range")))?;
        Ok(WeightedObjective {
            item_weight: &self.loss_weights[i],
            beta: self.beta(o),
        })
    }

    fn sampling(&self) -> Sampling {
        Sampling::training(self.settings.dropout)
    }

    /// Metrics on an arbitrary split.
    pub fn evaluate(&self, w: &[f64], split: &EvalSplit) -> Result<ParetoPoint> {
        evaluate_split(&self.model, w, split, &self.settings.objectives, &self.weights, self.settings.k)
    }
}

/// Per-user metrics averaged over users with a non-empty held-out set, in
/// objective order.
pub fn evaluate_split(
    model: &Autoencoder,
    w: &[f64],
    split: &EvalSplit,
    objectives: &[RecObjective],
    weights: &ItemWeights,
    k: usize,
) -> Result<ParetoPoint> {
    let per_user: Vec<Vec<f64>> = split
        .users
        .par_iter()
        .filter(|u| !u.held_out.is_empty())
        .map(|u| {
            let scores = model.scores(w, &u.fold_in)?;
            let ranked = top_k(&scores, &u.fold_in, k);
            objectives
                .iter()
                .map(|o| match o {
                    RecObjective::Relevance => recall_at_k(&ranked, &u.held_out, k),
                    RecObjective::Revenue => avg_price_at_k(&ranked, weights.prices(), k),
                    RecObjective::Recency => avg_recency_at_k(&ranked, weights.recency_transformed(), k),
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    if per_user.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let n = per_user.len() as f64;
    let means = (0..objectives.len())
        .map(|a| per_user.iter().map(|row| row[a]).collect::<KahanSum>().total() / n)
        .collect();
    ParetoPoint::new(means)
}

impl MultiObjectiveProblem for RecommenderProblem {
    type Batch = UserBatch;

    fn dim(&self) -> usize {
        self.model.num_params()
    }

    fn num_objectives(&self) -> usize {
        self.settings.objectives.len()
    }

    fn objective_names(&self) -> Vec<String> {
        self.settings.objectives.iter().map(|o| o.name().to_string()).collect()
    }

    fn init_params(&self, seed: u64) -> Vec<f64> {
        self.model.init_params(seed)
    }

    fn batches(&self, rng: &mut RngStream, batch_size: usize) -> Vec<UserBatch> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        for i in (1..order.len()).rev() {
            let j = rng.below(i as u64 + 1) as usize;
            order.swap(i, j);
        }
        order
            .chunks(batch_size.max(1))
            .map(|chunk| UserBatch {
                rows: chunk.iter().map(|&u| self.train[u].clone()).collect(),
            })
            .collect()
    }

    fn reference_batch(&self) -> UserBatch {
        UserBatch {
            rows: self.train.clone(),
        }
    }

    fn loss(&self, objective: usize, w: &[f64], batch: &UserBatch, seed: u64) -> Result<f64> {
        let o = self.objective(objective)?;
        self.model
            .weighted_nll_loss(w, &batch.rows, o.item_weight, o.beta, self.sampling(), seed)
    }

    fn grad(&self, objective: usize, w: &[f64], batch: &UserBatch, seed: u64) -> Result<Vec<f64>> {
        let o = self.objective(objective)?;
        self.model
            .backward(w, &batch.rows, o.item_weight, o.beta, self.sampling(), seed)
    }

    /// One forward pass per user shared by every objective; all objectives
    /// see the same dropout mask and latent sample.
    fn losses_and_grads(&self, w: &[f64], batch: &UserBatch, seed: u64) -> Result<Vec<(f64, Vec<f64>)>> {
        let objectives = (0..self.num_objectives())
            .map(|i| self.objective(i))
            .collect::<Result<Vec<_>>>()?;
        self.model
            .losses_and_grads(w, &batch.rows, &objectives, self.sampling(), seed)
    }

    fn eval_metrics(&self, w: &[f64]) -> Result<ParetoPoint> {
        self.evaluate(w, &self.validation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_problem(objectives: Vec<RecObjective>) -> RecommenderProblem {
        let num_items = 12;
        let train: Vec<Vec<u32>> = (0..30u32)
            .map(|u| {
                let base = (u % 3) * 4;
                vec![base, base + 1, base + 2, base + 3]
            })
            .collect();
        let validation = EvalSplit {
            users: (0..3u32)
                .map(|c| EvalUser {
                    fold_in: vec![c * 4, c * 4 + 1, c * 4 + 2],
                    held_out: vec![c * 4 + 3],
                })
                .collect(),
        };
        let prices = (0..num_items).map(|j| 1.0 + j as f64).collect();
        let recency = (0..num_items).map(|j| j as f64 / (num_items - 1) as f64).collect();
        let settings = RecommenderSettings {
            encoder_hidden: vec![8],
            latent: 4,
            objectives,
            k: 1,
            ..Default::default()
        };
        RecommenderProblem::new(settings, train, validation, ItemWeights::new(prices, recency).unwrap()).unwrap()
    }

    #[test]
    fn metric_axes_follow_objectives() {
        let two = toy_problem(vec![RecObjective::Relevance, RecObjective::Revenue]);
        let w = two.init_params(0);
        assert_eq!(two.eval_metrics(&w).unwrap().dim(), 2);
        assert_eq!(two.eval_metrics(&w).unwrap(), two.eval_metrics(&w).unwrap());
        let three = toy_problem(vec![RecObjective::Relevance, RecObjective::Revenue, RecObjective::Recency]);
        let m = three.eval_metrics(&three.init_params(0)).unwrap();
        assert_eq!(m.dim(), 3);
        assert!(m.values().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(three.metric_names(), ["recall@1", "avg_price@1", "avg_recency@1"]);
    }

    #[test]
    fn training_relevance_reaches_perfect_recall() {
        let p = toy_problem(vec![RecObjective::Relevance, RecObjective::Revenue]);
        let mut w = p.init_params(1);
        let batch = p.reference_batch();
        for step in 0..400 {
            let g = p.grad(0, &w, &batch, step).unwrap();
            for (wi, gi) in w.iter_mut().zip(&g) {
                *wi -= 0.5 * gi;
            }
        }
        assert_eq!(p.eval_metrics(&w).unwrap().values()[0], 1.0);
    }

    #[test]
    fn relevance_with_zero_beta_equals_unit_price_revenue() {
        let p = toy_problem(vec![RecObjective::Relevance, RecObjective::Revenue]);
        let w = p.init_params(2);
        let rows = p.reference_batch().rows;
        let ones = vec![1.0; 12];
        let relevance = p.loss(0, &w, &UserBatch { rows: rows.clone() }, 0).unwrap();
        let unit_revenue = p
            .model()
            .weighted_nll_loss(&w, &rows, &ones, 0.0, Sampling::training(0.0), 0)
            .unwrap();
        assert_eq!(relevance, unit_revenue);
    }

    #[test]
    fn shared_pass_matches_per_objective_calls() {
        let p = toy_problem(vec![RecObjective::Relevance, RecObjective::Revenue, RecObjective::Recency]);
        let w = p.init_params(3);
        let batch = p.reference_batch();
        let all = p.losses_and_grads(&w, &batch, 9).unwrap();
        for (i, (l, g)) in all.iter().enumerate() {
            assert!((l - p.loss(i, &w, &batch, 9).unwrap()).abs() < 1e-12);
            assert_eq!(g, &p.grad(i, &w, &batch, 9).unwrap());
        }
    }

    #[test]
    fn batches_cover_every_user_once() {
        let p = toy_problem(vec![RecObjective::Relevance, RecObjective::Revenue]);
        let mut rng = RngStream::new(4);
        let batches = p.batches(&mut rng, 7);
        assert_eq!(batches.len(), 5);
        assert_eq!(batches.iter().map(|b| b.rows.len()).sum::<usize>(), 30);
    }

    #[test]
    fn settings_errors() {
        let bad = RecommenderSettings {
            objectives: vec![RecObjective::Relevance],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let dup = RecommenderSettings {
            objectives: vec![RecObjective::Revenue, RecObjective::Revenue],
            ..Default::default()
        };
        assert!(dup.validate().is_err());
        let drop = RecommenderSettings {
            dropout: 1.0,
            ..Default::default()
        };
        assert!(drop.validate().is_err());
    }
}
