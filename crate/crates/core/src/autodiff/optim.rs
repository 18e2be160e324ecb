use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

use super::params::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with weight decay applied as a separate `lr · wd · param` shrink.
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    first: Vec<DenseMatrix>,
    second: Vec<DenseMatrix>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zeros = || {
            params
                .values()
                .iter()
                .map(|v| DenseMatrix::zeros(v.rows(), v.cols()))
                .collect()
        };
        Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[DenseMatrix]) -> Result<()> {
        if grads.len() != params.len() || grads.len() != self.first.len() {
            return Err(Error::shape(
                "adam_step",
                format!("{} gradients for {} parameters", grads.len(), params.len()),
            ));
        }
        for (p, g) in params.values().iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!("gradient {:?} for parameter {:?}", g.shape(), p.shape()),
                ));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params
            .values_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            let it = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((w, &gi), (mi, vi)) in it {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let update = (*mi / c1) / ((*vi / c2).sqrt() + eps);
                *w -= lr * update + lr * weight_decay * *w;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(params: &mut ParamSet, w: f64) -> crate::autodiff::ParamId {
        params.add("w", DenseMatrix::filled(1, 1, w))
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut params = ParamSet::new();
        let id = scalar(&mut params, 0.7);
        let mut adam = AdamState::new(AdamConfig::new(0.1, 0.0), &params);
        adam.step(&mut params, &[DenseMatrix::zeros(1, 1)]).unwrap();
        assert_eq!(params.get(id).get(0, 0), 0.7);
    }

    #[test]
    fn descends_on_a_quadratic() {
        let mut params = ParamSet::new();
        let id = scalar(&mut params, 1.0);
        let mut adam = AdamState::new(AdamConfig::new(0.1, 0.0), &params);
        let w0 = params.get(id).get(0, 0);
        adam.step(&mut params, &[DenseMatrix::filled(1, 1, 2.0 * w0)]).unwrap();
        assert!(params.get(id).get(0, 0) < w0);
    }

    #[test]
    fn matches_the_scalar_recursion_and_converges() {
        let (lr, b1, b2, eps) = (0.05, 0.9, 0.999, 1e-8);
        let mut params = ParamSet::new();
        let id = scalar(&mut params, 1.0);
        let mut adam = AdamState::new(AdamConfig::new(lr, 0.0), &params);
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=200 {
            let g = 2.0 * w;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            w -= lr * (mh / (vh.sqrt() + eps));
            let cur = params.get(id).get(0, 0);
            adam.step(&mut params, &[DenseMatrix::filled(1, 1, 2.0 * cur)]).unwrap();
        }
        let got = params.get(id).get(0, 0);
        assert!((got - w).abs() <= 1e-12 * w.abs().max(1e-12), "{got} vs {w}");
        assert!(got.abs() < 1e-2, "{got}");
    }

    #[test]
    fn rejects_mismatched_gradients() {
        let mut params = ParamSet::new();
        scalar(&mut params, 1.0);
        let mut adam = AdamState::new(AdamConfig::default(), &params);
        let e = adam.step(&mut params, &[DenseMatrix::zeros(2, 1)]).unwrap_err();
        assert_eq!(e.kind(), "ShapeMismatch");
    }
}
