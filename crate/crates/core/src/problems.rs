//! The multi-objective problem contract and a synthetic quadratic benchmark
//! whose Pareto set is known in closed form.

use crate::error::{Error, Result};
use crate::numerics::{derive_seed, norm_sq, RngStream};
use crate::pareto::ParetoPoint;

/// A differentiable vector-valued objective over a flat parameter vector.
///
/// Losses and gradients must be deterministic functions of
/// `(w, batch, seed)`; the seed feeds any sampling the objective needs
/// (gradient noise, reparameterization, dropout).
pub trait MultiObjectiveProblem {
    type Batch;

    fn dim(&self) -> usize;

    fn num_objectives(&self) -> usize;

    fn objective_names(&self) -> Vec<String>;

    /// Seeded parameter initialization.
    fn init_params(&self, seed: u64) -> Vec<f64>;

    /// One epoch worth of batches in training order.
    fn batches(&self, rng: &mut RngStream, batch_size: usize) -> Vec<Self::Batch>;

    /// The batch the normalization baselines and terminal probes are taken on.
    fn reference_batch(&self) -> Self::Batch;

    fn loss(&self, objective: usize, w: &[f64], batch: &Self::Batch, seed: u64) -> Result<f64>;

    fn grad(&self, objective: usize, w: &[f64], batch: &Self::Batch, seed: u64)
        -> Result<Vec<f64>>;

    /// `(loss_i, grad_i)` for every objective. Implementations may share the
    /// forward pass across objectives; the default calls `loss` and `grad`.
    fn losses_and_grads(
        &self,
        w: &[f64],
        batch: &Self::Batch,
        seed: u64,
    ) -> Result<Vec<(f64, Vec<f64>)>> {
        (0..self.num_objectives())
            .map(|i| {
                let s = derive_seed(seed, i as u64);
                Ok((self.loss(i, w, batch, s)?, self.grad(i, w, batch, s)?))
            })
            .collect()
    }

    /// Evaluation metrics, larger is better on every axis.
    fn eval_metrics(&self, w: &[f64]) -> Result<ParetoPoint>;
}

/// Batch marker for [`QuadraticProblem`]; the reference batch is noiseless.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadBatch {
    pub noisy: bool,
}

/// `L_i(w) = ||w - c_i||^2` with optional additive Gaussian gradient noise.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    centers: Vec<Vec<f64>>,
    noise_sigma: f64,
    /// Virtual sample count; an epoch has `ceil(dataset_size / batch_size)` steps.
    dataset_size: usize,
    init_scale: f64,
}

impl QuadraticProblem {
    pub fn new(centers: Vec<Vec<f64>>, noise_sigma: f64) -> Result<Self> {
        if centers.len() < 2 {
            return Err(Error::invalid("centers", "need at least 2 objectives"));
        }
        let dim = centers[0].len();
        if dim == 0 {
            return Err(Error::invalid("centers", "dimension must be >= 1"));
        }
        if let Some(c) = centers.iter().find(|c| c.len() != dim) {
            return Err(Error::LengthMismatch {
                expected: dim,
                actual: c.len(),
            });
        }
        if centers.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("quadratic centers".into()));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma", "must be finite and >= 0"));
        }
        Ok(Self {
            centers,
            noise_sigma,
            dataset_size: 1,
            init_scale: 1.0,
        })
    }

    pub fn with_dataset_size(mut self, dataset_size: usize) -> Self {
        self.dataset_size = dataset_size.max(1);
        self
    }

    /// Standard deviation of the Gaussian initialization around the origin.
    pub fn with_init_scale(mut self, init_scale: f64) -> Self {
        self.init_scale = init_scale;
        self
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    fn check(&self, objective: usize, w: &[f64]) -> Result<()> {
        if objective >= self.centers.len() {
            return Err(Error::invalid(
                "objective",
                format!("{objective} out of range 0..{}", self.centers.len()),
            ));
        }
        if w.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                actual: w.len(),
            });
        }
        Ok(())
    }

    pub fn quad_loss(&self, objective: usize, w: &[f64]) -> Result<f64> {
        self.check(objective, w)?;
        Ok(w.iter()
            .zip(&self.centers[objective])
            .map(|(a, c)| (a - c) * (a - c))
            .sum())
    }

    /// `2 (w - c_i) + sigma * xi`; noise is drawn only when `noisy`.
    pub fn quad_grad(&self, objective: usize, w: &[f64], noisy: bool, seed: u64) -> Result<Vec<f64>> {
        self.check(objective, w)?;
        let mut g: Vec<f64> = w
            .iter()
            .zip(&self.centers[objective])
            .map(|(a, c)| 2.0 * (a - c))
            .collect();
        if noisy && self.noise_sigma > 0.0 {
            let mut rng = RngStream::new(seed);
            for gi in g.iter_mut() {
                *gi += self.noise_sigma * rng.normal();
            }
        }
        Ok(g)
    }

    /// Point `(1 - t) c_1 + t c_2` of the bi-objective Pareto set.
    pub fn quad_pareto_set(&self, t: f64) -> Result<Vec<f64>> {
        if self.centers.len() != 2 {
            return Err(Error::invalid(
                "centers",
                "closed-form Pareto set only for 2 objectives",
            ));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid("t", format!("{t} not in [0, 1]")));
        }
        let (c1, c2) = (&self.centers[0], &self.centers[1]);
        Ok(c1.iter().zip(c2).map(|(a, b)| (1.0 - t) * a + t * b).collect())
    }

    /// Euclidean distance from `w` to the segment `[c_1, c_2]`.
    pub fn distance_to_pareto_set(&self, w: &[f64]) -> Result<f64> {
        if self.centers.len() != 2 {
            return Err(Error::invalid(
                "centers",
                "closed-form Pareto set only for 2 objectives",
            ));
        }
        let (c1, c2) = (&self.centers[0], &self.centers[1]);
        let dir: Vec<f64> = c2.iter().zip(c1).map(|(b, a)| b - a).collect();
        let len_sq = norm_sq(&dir);
        let t = if len_sq == 0.0 {
            0.0
        } else {
            let proj: f64 = w.iter().zip(c1).zip(&dir).map(|((x, a), d)| (x - a) * d).sum();
            (proj / len_sq).clamp(0.0, 1.0)
        };
        let closest = self.quad_pareto_set(t)?;
        Ok(norm_sq(&w.iter().zip(&closest).map(|(a, b)| a - b).collect::<Vec<_>>()).sqrt())
    }

    /// `1 / (1 + L_i(w))` per objective.
    pub fn quad_eval_metrics(&self, w: &[f64]) -> Result<ParetoPoint> {
        let values = (0..self.centers.len())
            .map(|i| self.quad_loss(i, w).map(|l| 1.0 / (1.0 + l)))
            .collect::<Result<Vec<_>>>()?;
        ParetoPoint::new(values)
    }
}

impl MultiObjectiveProblem for QuadraticProblem {
    type Batch = QuadBatch;

    fn dim(&self) -> usize {
        self.centers[0].len()
    }

    fn num_objectives(&self) -> usize {
        self.centers.len()
    }

    fn objective_names(&self) -> Vec<String> {
        (1..=self.centers.len()).map(|i| format!("f{i}")).collect()
    }

    fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed);
        (0..self.dim()).map(|_| self.init_scale * rng.normal()).collect()
    }

    fn batches(&self, _rng: &mut RngStream, batch_size: usize) -> Vec<QuadBatch> {
        let steps = self.dataset_size.div_ceil(batch_size.max(1));
        vec![QuadBatch { noisy: true }; steps]
    }

    fn reference_batch(&self) -> QuadBatch {
        QuadBatch { noisy: false }
    }

    fn loss(&self, objective: usize, w: &[f64], _batch: &QuadBatch, _seed: u64) -> Result<f64> {
        self.quad_loss(objective, w)
    }

    fn grad(&self, objective: usize, w: &[f64], batch: &QuadBatch, seed: u64) -> Result<Vec<f64>> {
        self.quad_grad(objective, w, batch.noisy, seed)
    }

    fn eval_metrics(&self, w: &[f64]) -> Result<ParetoPoint> {
        self.quad_eval_metrics(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combiner::{combine, solve_two_objective, GradientSet};
    use crate::numerics::norm;

    fn two_centers() -> QuadraticProblem {
        QuadraticProblem::new(vec![vec![0.0, 0.0], vec![2.0, 0.0]], 0.0).unwrap()
    }

    #[test]
    fn loss_and_grad_examples() {
        let p = QuadraticProblem::new(vec![vec![0.0, 0.0], vec![5.0, 5.0]], 0.0).unwrap();
        assert_eq!(p.quad_loss(1, &[5.0, 5.0]).unwrap(), 0.0);
        assert_eq!(p.quad_grad(1, &[5.0, 5.0], true, 1).unwrap(), vec![0.0, 0.0]);
        assert_eq!(p.quad_loss(0, &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(p.quad_grad(0, &[1.0, 0.0], true, 1).unwrap(), vec![2.0, 0.0]);
        assert!(p.quad_loss(2, &[1.0, 0.0]).is_err());
        assert!(p.quad_loss(0, &[1.0]).is_err());
    }

    #[test]
    fn finite_difference_gradients() {
        let p = QuadraticProblem::new(vec![vec![0.3, -1.0, 2.0], vec![1.0, 1.0, -0.5]], 0.0).unwrap();
        let mut rng = RngStream::new(8);
        let h = 1e-4;
        for _ in 0..100 {
            let w: Vec<f64> = (0..3).map(|_| 3.0 * rng.normal()).collect();
            for i in 0..2 {
                let g = p.quad_grad(i, &w, false, 0).unwrap();
                for k in 0..3 {
                    let mut wp = w.clone();
                    let mut wm = w.clone();
                    wp[k] += h;
                    wm[k] -= h;
                    let fd = (p.quad_loss(i, &wp).unwrap() - p.quad_loss(i, &wm).unwrap()) / (2.0 * h);
                    assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn noise_is_seeded() {
        let p = QuadraticProblem::new(vec![vec![0.0; 4], vec![1.0; 4]], 0.5).unwrap();
        let w = [0.1, 0.2, 0.3, 0.4];
        let a = p.quad_grad(0, &w, true, 77).unwrap();
        let b = p.quad_grad(0, &w, true, 77).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, p.quad_grad(0, &w, true, 78).unwrap());
        assert_eq!(p.quad_grad(0, &w, false, 77).unwrap(), vec![0.2, 0.4, 0.6, 0.8]);
    }

    #[test]
    fn pareto_set_examples() {
        let p = two_centers();
        assert_eq!(p.quad_pareto_set(0.0).unwrap(), vec![0.0, 0.0]);
        let mid = p.quad_pareto_set(0.5).unwrap();
        assert_eq!(mid, vec![1.0, 0.0]);
        let g1 = p.quad_grad(0, &mid, false, 0).unwrap();
        let g2 = p.quad_grad(1, &mid, false, 0).unwrap();
        assert_eq!(g1, vec![2.0, 0.0]);
        assert_eq!(g2, vec![-2.0, 0.0]);
        let w = solve_two_objective(&g1, &g2).unwrap();
        let d = combine(&GradientSet::new(vec![g1, g2]).unwrap(), &w).unwrap();
        assert_eq!(norm(&d), 0.0);

        let three = QuadraticProblem::new(vec![vec![0.0], vec![1.0], vec![2.0]], 0.0).unwrap();
        assert!(three.quad_pareto_set(0.5).is_err());
    }

    #[test]
    fn off_segment_points_are_not_stationary() {
        let p = two_centers();
        for i in -10..=30 {
            for j in -10..=10 {
                let w = [i as f64 * 0.1, j as f64 * 0.1];
                let g1 = p.quad_grad(0, &w, false, 0).unwrap();
                let g2 = p.quad_grad(1, &w, false, 0).unwrap();
                let alpha = solve_two_objective(&g1, &g2).unwrap();
                let d = combine(&GradientSet::new(vec![g1, g2]).unwrap(), &alpha).unwrap();
                let dist = p.distance_to_pareto_set(&w).unwrap();
                if dist > 1e-9 {
                    assert!(norm(&d) > 0.0, "w={w:?}");
                } else {
                    assert!(norm(&d) < 1e-12, "w={w:?}");
                }
            }
        }
    }

    #[test]
    fn eval_metrics_examples() {
        let p = two_centers();
        let m = p.quad_eval_metrics(&[0.0, 0.0]).unwrap();
        assert_eq!(m.values()[0], 1.0);
        let m = p.quad_eval_metrics(&[1.0, 0.0]).unwrap();
        assert_eq!(m.values(), &[0.5, 0.5]);
        let near = p.quad_eval_metrics(&[0.5, 0.0]).unwrap();
        let far = p.quad_eval_metrics(&[-1.0, 0.0]).unwrap();
        assert!(near.values()[0] > far.values()[0]);
    }

    #[test]
    fn batches_follow_dataset_size() {
        let p = two_centers().with_dataset_size(10);
        let mut rng = RngStream::new(0);
        assert_eq!(p.batches(&mut rng, 3).len(), 4);
        assert_eq!(p.batches(&mut rng, 10).len(), 1);
        assert_eq!(two_centers().batches(&mut rng, 64).len(), 1);
    }
}
