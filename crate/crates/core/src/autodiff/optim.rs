use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerMethod {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub method: OptimizerMethod,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            method: OptimizerMethod::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        OptimizerConfig {
            method: OptimizerMethod::Sgd,
            lr,
            ..Default::default()
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerConfig {
            lr,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.method == OptimizerMethod::Adam
            && !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2))
        {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.method == OptimizerMethod::Adam && !(self.eps > 0.0) {
            return Err(Error::Config("Adam eps must be positive".into()));
        }
        Ok(())
    }
}

/// First-order optimizer. Frozen parameters are skipped entirely: their
/// values and moment estimates never change.
#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Optimizer {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// First-moment estimate for the parameter at `index`, if Adam has
    /// touched it.
    pub fn first_moment(&self, index: usize) -> Option<&[f64]> {
        self.first.get(index).map(Vec::as_slice)
    }

    pub fn second_moment(&self, index: usize) -> Option<&[f64]> {
        self.second.get(index).map(Vec::as_slice)
    }

    /// Applies one update from the accumulated gradients, then resets every
    /// accumulator to zero.
    pub fn step(&mut self, params: &mut ParamStore) {
        self.step += 1;
        let c = self.config;
        if c.method == OptimizerMethod::Adam {
            while self.first.len() < params.len() {
                let id = self.first.len();
                let n = params.value(super::ParamId(id)).len();
                self.first.push(vec![0.0; n]);
                self.second.push(vec![0.0; n]);
            }
        }
        let t = self.step as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        for id in params.ids().collect::<Vec<_>>() {
            if params.is_frozen(id) {
                continue;
            }
            let (value, grad) = params.value_and_grad_mut(id);
            let (value, grad) = (value.data_mut(), grad.data());
            match c.method {
                OptimizerMethod::Sgd => {
                    for (w, g) in value.iter_mut().zip(grad) {
                        *w -= c.lr * g;
                    }
                }
                OptimizerMethod::Adam => {
                    let m = &mut self.first[id.0];
                    let v = &mut self.second[id.0];
                    for k in 0..value.len() {
                        let g = grad[k];
                        m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
                        v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
                        let m_hat = m[k] / bias1;
                        let v_hat = v[k] / bias2;
                        value[k] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
                    }
                }
            }
        }
        params.zero_grads();
    }
}
