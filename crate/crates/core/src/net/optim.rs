//! AdamW with bias correction and decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::model::PotentialModel;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    first_moment: Vec<Matrix>,
    second_moment: Vec<Matrix>,
    step: u64,
}

/// The update produced a non-finite parameter or moment.
#[derive(Debug, Clone, PartialEq)]
pub struct NonFiniteUpdate {
    pub parameter: usize,
}

impl OptimizerState {
    pub fn new(model: &PotentialModel, config: AdamWConfig) -> Self {
        let zeros: Vec<Matrix> = model
            .parameters()
            .iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            config,
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One AdamW update. Panics if gradient shapes do not match the model.
    pub fn step(
        &mut self,
        model: &mut PotentialModel,
        gradients: &[Matrix],
    ) -> Result<(), NonFiniteUpdate> {
        assert_eq!(gradients.len(), model.parameters().len(), "gradient count");
        self.step += 1;
        let AdamWConfig {
            learning_rate: lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for (idx, (param, grad)) in model.parameters_mut().iter_mut().zip(gradients).enumerate() {
            assert_eq!(
                param.shape(),
                grad.shape(),
                "gradient shape for parameter {idx}"
            );
            let m = self.first_moment[idx].as_mut_slice();
            let v = self.second_moment[idx].as_mut_slice();
            for (k, (p, &g)) in param
                .as_mut_slice()
                .iter_mut()
                .zip(grad.as_slice())
                .enumerate()
            {
                *p *= 1.0 - lr * weight_decay;
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
                if !p.is_finite() || !m[k].is_finite() || !v[k].is_finite() {
                    return Err(NonFiniteUpdate { parameter: idx });
                }
            }
        }
        Ok(())
    }
}
