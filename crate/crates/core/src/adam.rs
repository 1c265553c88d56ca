//! Adam with bias correction over any [`Parameters`] store.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Parameters;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Moment accumulators, flattened in [`Parameters::param_slices`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            t: 0,
            m: alloc::vec![0.0; num_params],
            v: alloc::vec![0.0; num_params],
        }
    }

    pub fn for_params<P: Parameters + ?Sized>(params: &P, config: AdamConfig) -> Self {
        Self::new(params.num_params(), config)
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// Applies one update. Nothing is modified if shapes disagree or any
    /// gradient entry is non-finite.
    pub fn step<P, G>(&mut self, params: &mut P, grads: &G) -> Result<()>
    where
        P: Parameters + ?Sized,
        G: Parameters + ?Sized,
    {
        let gs = grads.param_slices();
        let n: usize = gs.iter().map(|s| s.len()).sum();
        if n != self.m.len() {
            return Err(Error::shape("AdamState::step gradient length", self.m.len(), n));
        }
        if let Some(index) = gs.iter().flat_map(|s| s.iter()).position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                context: "gradient",
                index,
            });
        }
        let mut ps = params.param_slices_mut();
        if ps.len() != gs.len() || ps.iter().zip(&gs).any(|(p, g)| p.len() != g.len()) {
            return Err(Error::shape("AdamState::step parameter layout", n, ps.iter().map(|s| s.len()).sum()));
        }

        self.t += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - libm::pow(beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(beta2, self.t as f64);
        let mut off = 0;
        for (p, g) in ps.iter_mut().zip(&gs) {
            let m = &mut self.m[off..off + g.len()];
            let v = &mut self.v[off..off + g.len()];
            for i in 0..g.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= learning_rate * m_hat / (libm::sqrt(v_hat) + epsilon);
            }
            off += g.len();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    struct Scalar(Vec<f64>);

    impl Parameters for Scalar {
        fn param_slices(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Scalar(vec![1.0]);
        let mut s = AdamState::for_params(&p, AdamConfig::default());
        s.step(&mut p, &Scalar(vec![1.0])).unwrap();
        // m_hat = 1, v_hat = 1 at t = 1
        let expected = 1.0 - 1e-3 / (1.0 + 1e-8);
        assert!((p.0[0] - expected).abs() < 1e-15);
        assert!((1.0 - p.0[0] - 0.001).abs() < 1e-10);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        let mut p = Scalar(vec![0.3, -2.0]);
        let mut s = AdamState::for_params(&p, AdamConfig::default());
        s.step(&mut p, &Scalar(vec![0.0, 0.0])).unwrap();
        assert_eq!(p.0, vec![0.3, -2.0]);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn second_moment_positive_after_two_steps() {
        let mut p = Scalar(vec![0.0]);
        let mut s = AdamState::for_params(&p, AdamConfig::default());
        let g = Scalar(vec![0.5]);
        s.step(&mut p, &g).unwrap();
        s.step(&mut p, &g).unwrap();
        assert!(s.second_moment()[0] > 0.0);
        assert_eq!(s.step_count(), 2);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut p = Scalar(vec![0.0, 1.0]);
        let mut s = AdamState::for_params(&p, AdamConfig::default());
        let err = s.step(&mut p, &Scalar(vec![0.0, f64::NAN])).unwrap_err();
        assert_eq!(err, Error::NonFinite { context: "gradient", index: 1 });
        assert_eq!(s.step_count(), 0);
        assert_eq!(p.0, vec![0.0, 1.0]);
    }

    #[test]
    fn rejects_length_mismatch() {
        let mut p = Scalar(vec![0.0, 1.0]);
        let mut s = AdamState::for_params(&p, AdamConfig::default());
        assert!(s.step(&mut p, &Scalar(vec![0.0])).is_err());
    }
}
