use serde::{Deserialize, Serialize};

use super::network::{DenseNetwork, NetworkGradients};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Adam moment accumulators for one network.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(net: &DenseNetwork, config: AdamConfig) -> Self {
        let n = net.parameter_count();
        Self {
            config,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. A non-finite gradient leaves both the
    /// network and the state untouched.
    pub fn step(&mut self, net: &mut DenseNetwork, grads: &NetworkGradients) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        if grads.iter().count() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                got: grads.iter().count(),
            });
        }
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let (m, v) = (&mut self.m, &mut self.v);
        net.update_with(grads, |i, p, g| {
            m[i] = flush(b1 * m[i] + (1.0 - b1) * g);
            v[i] = flush(b2 * v[i] + (1.0 - b2) * g * g);
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        });
        Ok(())
    }
}

/// Moments of parameters that stop receiving gradient decay geometrically
/// into subnormals, which are very slow to compute with; they are zeroed.
#[inline]
fn flush(x: f64) -> f64 {
    if x.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        x
    }
}

pub fn adam_step(net: &mut DenseNetwork, grads: &NetworkGradients, state: &mut OptimizerState) -> Result<()> {
    state.step(net, grads)
}
