use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Defaults follow the training setup: lr = 1e-4, betas = (0, 0.99), eps = 1e-8.
/// beta1 = 0 disables momentum; it is kept as the default on purpose and can
/// be overridden through the config.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.0,
            beta2: 0.99,
            epsilon: 1e-8,
        }
    }
}

/// Adam over a flat parameter vector, with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<f32>,
    pub second_moment: Vec<f32>,
}

impl Adam {
    pub fn new(config: AdamConfig, param_count: usize) -> Self {
        Adam {
            config,
            step: 0,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
        }
    }

    pub fn update(&mut self, params: &mut [f32], grads: &[f32]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam: {} params, {} grads, state for {}",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        self.step += 1;
        let t = self.step as f64;
        let c = self.config;
        let bc1 = 1.0 - (c.beta1 as f64).powf(t);
        let bc2 = 1.0 - (c.beta2 as f64).powf(t);
        for i in 0..params.len() {
            let g = grads[i];
            let m = c.beta1 * self.first_moment[i] + (1.0 - c.beta1) * g;
            let v = c.beta2 * self.second_moment[i] + (1.0 - c.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            let m_hat = m as f64 / bc1;
            let v_hat = v as f64 / bc2;
            params[i] -= (c.lr as f64 * m_hat / (v_hat.sqrt() + c.epsilon as f64)) as f32;
        }
        Ok(())
    }
}
