//! Multi-objective gradient descent with per-objective Adam-style gradient
//! smoothing, Pareto front quality indicators and a small multi-objective
//! recommender to exercise them.

pub mod adamizer;
pub mod combiner;
pub mod data;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod numerics;
pub mod pareto;
pub mod problems;
pub mod recsys;

pub use error::{Error, Result};
