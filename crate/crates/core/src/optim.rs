//! Adam with bias-corrected moment estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zeroed moments shaped like `params`.
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Result<Self> {
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = config;
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::invalid("adam", format!("learning rate {lr} must be non-negative")));
        }
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::invalid("adam", format!("betas ({beta1}, {beta2}) outside [0, 1)")));
        }
        if !(epsilon > 0.0) {
            return Err(Error::invalid("adam", format!("epsilon {epsilon} must be positive")));
        }
        let m: Vec<Vec<f64>> = params.into_iter().map(|p| vec![0.0; p.len()]).collect();
        let v = m.clone();
        Ok(Self { config, step: 0, m, v })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// One update of every parameter. Nothing is modified if any gradient is
    /// non-finite or mis-shaped.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut Tensor>, grads: &[&Tensor]) -> Result<()> {
        let params: Vec<&mut Tensor> = params.into_iter().collect();
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(
                "adam",
                format!(
                    "state tracks {} tensors, got {} params and {} grads",
                    self.m.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.len() != self.m[i].len() {
                return Err(Error::shape(
                    "adam",
                    format!("param {i} is {:?} but its gradient is {:?}", p.shape(), g.shape()),
                ));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    op: "adam",
                    context: Some(format!("gradient of parameter {i} at step {}", self.step + 1)),
                });
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.into_iter().zip(grads).zip(self.m.iter_mut().zip(&mut self.v)) {
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_step(w0: f64, g: f64, lr: f64) -> f64 {
        let mut w = Tensor::scalar(w0);
        let mut adam = AdamState::new(
            AdamConfig {
                lr,
                ..Default::default()
            },
            [&w],
        )
        .unwrap();
        adam.step([&mut w], &[&Tensor::scalar(g)]).unwrap();
        w.item()
    }

    #[test]
    fn first_step_hand_value() {
        let w = scalar_step(1.0, 2.0, 0.1);
        assert!((w - (1.0 - 0.1 * 2.0 / (2.0 + 1e-8))).abs() < 1e-15);
        assert!((w - 0.9).abs() < 1e-8);
    }

    #[test]
    fn first_step_is_scale_free() {
        let a = 1.0 - scalar_step(1.0, 2.0, 0.01);
        let b = 1.0 - scalar_step(1.0, 2000.0, 0.01);
        assert!(((a - b) / a).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        assert_eq!(scalar_step(0.37, 0.0, 0.1), 0.37);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut w = Tensor::scalar(1.0);
        let mut adam = AdamState::new(
            AdamConfig {
                lr: 0.05,
                ..Default::default()
            },
            [&w],
        )
        .unwrap();
        for _ in 0..500 {
            let g = Tensor::scalar(2.0 * w.item());
            adam.step([&mut w], &[&g]).unwrap();
            assert!(adam.second_moments()[0][0] >= 0.0);
        }
        assert!(w.item().abs() < 1e-2, "w = {}", w.item());
    }

    #[test]
    fn rejects_bad_hyperparameters_and_nan() {
        let w = Tensor::scalar(1.0);
        for cfg in [
            AdamConfig { lr: -1.0, ..Default::default() },
            AdamConfig { beta1: 1.0, ..Default::default() },
            AdamConfig { beta2: -0.1, ..Default::default() },
            AdamConfig { epsilon: 0.0, ..Default::default() },
        ] {
            assert!(AdamState::new(cfg, [&w]).is_err());
        }
        let mut w = Tensor::scalar(1.0);
        let mut adam = AdamState::new(AdamConfig::default(), [&w]).unwrap();
        assert!(adam.step([&mut w], &[&Tensor::scalar(f64::NAN)]).is_err());
        assert_eq!(w.item(), 1.0);
        assert_eq!(adam.step_count(), 0);
    }
}
