//! AdaDelta with decaying accumulators of squared gradients and updates.
//!
//! ```text
//! E[g²] ← ρ E[g²] + (1 − ρ) g²
//! Δ     = −sqrt(E[Δ²] + ε) / sqrt(E[g²] + ε) · g
//! E[Δ²] ← ρ E[Δ²] + (1 − ρ) Δ²
//! θ     ← θ + lr · Δ
//! ```
//!
//! The update accumulator stores `Δ` before scaling by the learning rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaDeltaConfig {
    pub rho: f64,
    pub eps: f64,
    pub lr: f64,
}

impl Default for AdaDeltaConfig {
    fn default() -> Self {
        AdaDeltaConfig {
            rho: 0.95,
            eps: 1e-6,
            lr: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaDelta {
    pub config: AdaDeltaConfig,
    pub accum_grad: Vec<f64>,
    pub accum_update: Vec<f64>,
}

impl AdaDelta {
    pub fn new(config: AdaDeltaConfig, dim: usize) -> Self {
        AdaDelta {
            config,
            accum_grad: vec![0.0; dim],
            accum_update: vec![0.0; dim],
        }
    }

    /// Applies one update to `params`. Nothing is modified if any gradient
    /// entry is non-finite.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || grads.len() != self.accum_grad.len() {
            return Err(Error::Shape(format!(
                "{} parameters, {} gradients, {} state entries",
                params.len(),
                grads.len(),
                self.accum_grad.len()
            )));
        }
        if let Some(j) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient coordinate {j} is {}", grads[j])));
        }
        let AdaDeltaConfig { rho, eps, lr } = self.config;
        for (((p, &g), eg), ed) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.accum_grad)
            .zip(&mut self.accum_update)
        {
            *eg = rho * *eg + (1.0 - rho) * g * g;
            let delta = -((*ed + eps).sqrt() / (*eg + eps).sqrt()) * g;
            *ed = rho * *ed + (1.0 - rho) * delta * delta;
            *p += lr * delta;
        }
        Ok(())
    }
}
