//! Per-objective Adam-style gradient smoothing.
//!
//! Each objective keeps its own first/second moment estimates. A call blends
//! the raw gradient with the bias-corrected Adam direction:
//! `(1 - lambda) g + lambda * m_hat / (sqrt(v_hat) + eps)`.

use crate::error::{Error, Result};
use crate::numerics::all_finite;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamizeParams {
    pub beta1: f64,
    pub beta2: f64,
    /// Blend between the raw gradient (0) and the Adam direction (1).
    pub lambda: f64,
    pub epsilon: f64,
}

impl Default for AdamizeParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            lambda: 1.0,
            epsilon: 1e-8,
        }
    }
}

impl AdamizeParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::invalid("beta1", format!("{} not in [0, 1)", self.beta1)));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("beta2", format!("{} not in [0, 1)", self.beta2)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid("lambda", format!("{} not in [0, 1]", self.lambda)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("epsilon", format!("{} must be > 0", self.epsilon)));
        }
        Ok(())
    }
}

/// Moment estimates for one objective.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    params: AdamizeParams,
}

impl MomentState {
    pub fn new(dim: usize, beta1: f64, beta2: f64, lambda: f64, epsilon: f64) -> Result<Self> {
        Self::with_params(
            dim,
            AdamizeParams {
                beta1,
                beta2,
                lambda,
                epsilon,
            },
        )
    }

    pub fn with_params(dim: usize, params: AdamizeParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            params,
        })
    }

    pub fn params(&self) -> &AdamizeParams {
        &self.params
    }

    pub fn step(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// Bias-corrected `(m_hat, v_hat)` at the current step.
    pub fn bias_corrected(&self) -> (Vec<f64>, Vec<f64>) {
        let t = self.t as i32;
        let c1 = 1.0 - self.params.beta1.powi(t);
        let c2 = 1.0 - self.params.beta2.powi(t);
        (
            self.m.iter().map(|m| m / c1).collect(),
            self.v.iter().map(|v| v / c2).collect(),
        )
    }

    /// Updates the moments with `g` and returns the smoothed gradient.
    pub fn adamize(&mut self, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != self.m.len() {
            return Err(Error::LengthMismatch {
                expected: self.m.len(),
                actual: g.len(),
            });
        }
        if !all_finite(g) {
            return Err(Error::NonFinite("gradient passed to adamize".into()));
        }
        let AdamizeParams {
            beta1,
            beta2,
            lambda,
            epsilon,
        } = self.params;

        self.t += 1;
        for ((m, v), &gi) in self.m.iter_mut().zip(self.v.iter_mut()).zip(g) {
            *m = beta1 * *m + (1.0 - beta1) * gi;
            *v = beta2 * *v + (1.0 - beta2) * gi * gi;
        }
        if lambda == 0.0 {
            return Ok(g.to_vec());
        }

        let t = self.t as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let corrected = self.m.iter().zip(&self.v).map(|(m, v)| {
            let m_hat = m / c1;
            let v_hat = v / c2;
            m_hat / (v_hat.sqrt() + epsilon)
        });
        if lambda == 1.0 {
            return Ok(corrected.collect());
        }
        Ok(corrected
            .zip(g)
            .map(|(c, gi)| (1.0 - lambda) * gi + lambda * c)
            .collect())
    }

    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.t = 0;
    }

    /// Same state with a different blend factor.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let mut params = self.params;
        params.lambda = lambda;
        params.validate()?;
        Ok(Self {
            params,
            ..self.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{rand_normal, RngStream};

    #[test]
    fn new_state_is_zeroed_and_validated() {
        let s = MomentState::new(3, 0.9, 0.999, 1.0, 1e-8).unwrap();
        assert_eq!(s.first_moment(), &[0.0; 3]);
        assert_eq!(s.second_moment(), &[0.0; 3]);
        assert_eq!(s.step(), 0);
        assert!(MomentState::new(3, 1.0, 0.999, 1.0, 1e-8).is_err());
        assert!(MomentState::new(3, 0.9, 1.0, 1.0, 1e-8).is_err());
        assert!(MomentState::new(3, 0.9, 0.999, 1.5, 1e-8).is_err());
        assert!(MomentState::new(3, 0.9, 0.999, 1.0, 0.0).is_err());
        assert!(MomentState::new(3, 0.9, 0.999, 0.5, 1e-8).is_ok());
    }

    #[test]
    fn lambda_zero_is_identity_but_moments_move() {
        let mut s = MomentState::new(2, 0.9, 0.999, 0.0, 1e-8).unwrap();
        let g = [-0.0, 3.25];
        let out = s.adamize(&g).unwrap();
        assert_eq!(out[0].to_bits(), g[0].to_bits());
        assert_eq!(out[1].to_bits(), g[1].to_bits());
        assert_eq!(s.step(), 1);
        assert!(s.first_moment()[1] != 0.0);
    }

    #[test]
    fn first_step_hand_evaluated() {
        let eps = 1e-8;
        let mut s = MomentState::new(1, 0.9, 0.999, 1.0, eps).unwrap();
        let out = s.adamize(&[4.0]).unwrap();
        let (m_hat, v_hat) = s.bias_corrected();
        assert!((m_hat[0] - 4.0).abs() < 1e-12);
        assert!((v_hat[0] - 16.0).abs() < 1e-12);
        assert!((out[0] - 4.0 / (4.0 + eps)).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_gives_zero() {
        let mut s = MomentState::new(3, 0.9, 0.999, 1.0, 1e-8).unwrap();
        assert_eq!(s.adamize(&[0.0; 3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn errors() {
        let mut s = MomentState::new(2, 0.9, 0.999, 1.0, 1e-8).unwrap();
        assert!(matches!(s.adamize(&[1.0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(s.adamize(&[1.0, f64::INFINITY]), Err(Error::NonFinite(_))));
        assert_eq!(s.step(), 0);
    }

    #[test]
    fn reset_matches_fresh_state() {
        let mut rng = RngStream::new(3);
        let mut s = MomentState::new(4, 0.8, 0.99, 0.7, 1e-8).unwrap();
        let params = *s.params();
        for _ in 0..5 {
            s.adamize(&rand_normal(&mut rng, 4)).unwrap();
        }
        s.reset();
        let once = s.clone();
        s.reset();
        assert_eq!(s, once);
        assert_eq!(*s.params(), params);

        let g = rand_normal(&mut rng, 4);
        let mut fresh = MomentState::with_params(4, params).unwrap();
        assert_eq!(s.adamize(&g).unwrap(), fresh.adamize(&g).unwrap());
        assert_eq!(s, fresh);
    }

    #[test]
    fn constant_gradient_converges_to_sign() {
        let mut s = MomentState::new(3, 0.9, 0.999, 1.0, 1e-8).unwrap();
        let g = [2.5, -0.01, 40.0];
        let mut out = vec![];
        for _ in 0..5000 {
            out = s.adamize(&g).unwrap();
        }
        for (o, gi) in out.iter().zip(g) {
            assert!((o - gi.signum()).abs() < 1e-6, "{o}");
        }
    }

    #[test]
    fn lambda_interpolation() {
        let mut rng = RngStream::new(9);
        let mut base = MomentState::new(5, 0.9, 0.999, 0.0, 1e-8).unwrap();
        for _ in 0..4 {
            base.adamize(&rand_normal(&mut rng, 5)).unwrap();
        }
        let g = rand_normal(&mut rng, 5);
        let out0 = base.with_lambda(0.0).unwrap().adamize(&g).unwrap();
        let out1 = base.with_lambda(1.0).unwrap().adamize(&g).unwrap();
        for lambda in [0.25, 0.5, 0.9] {
            let out = base.with_lambda(lambda).unwrap().adamize(&g).unwrap();
            for i in 0..5 {
                let expect = (1.0 - lambda) * out0[i] + lambda * out1[i];
                assert!((out[i] - expect).abs() < 1e-12);
            }
        }
    }
}
