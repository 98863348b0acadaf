//! Multinomial autoencoder recommender with relevance, revenue and recency
//! objectives.

pub mod metrics;
pub mod model;
pub mod problem;

pub use metrics::{
    avg_price_at_k, avg_recency_at_k, recall_at_k, recency_transform, top_k, ItemWeights,
};
pub use model::{Autoencoder, ForwardOutput, ModelShape, Sampling, WeightedObjective};
pub use problem::{
    evaluate_split, EvalSplit, EvalUser, RecObjective, RecommenderProblem, RecommenderSettings,
    UserBatch,
};
