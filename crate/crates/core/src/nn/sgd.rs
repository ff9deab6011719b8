use serde::{Deserialize, Serialize};

use super::{ModelGraph, Scalar};
use crate::error::{invariant, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.01,
            momentum: 0.0,
            batch_size: 32,
            epochs: 10,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invariant!("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invariant!("momentum must lie in [0, 1)"));
        }
        if self.epochs == 0 {
            return Err(invariant!("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(invariant!("batch size must be at least 1"));
        }
        Ok(())
    }
}

/// Stochastic gradient descent, `w ← w − lr·g`, with optional heavy-ball
/// momentum.
#[derive(Debug, Clone)]
pub struct Sgd<T: Scalar = f32> {
    config: SgdConfig,
    velocity: Vec<T>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(config: SgdConfig) -> Result<Self> {
        config.validate()?;
        Ok(Sgd {
            config,
            velocity: Vec::new(),
        })
    }

    /// Applies the model's stored gradients.
    pub fn step(&mut self, model: &mut ModelGraph<T>) -> Result<()> {
        let lr = T::of(self.config.learning_rate);
        let grads = model.grads().to_vec();
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite gradient in SGD step".to_owned()));
        }
        if self.config.momentum > 0.0 {
            let mu = T::of(self.config.momentum);
            if self.velocity.len() != grads.len() {
                self.velocity = vec![T::zero(); grads.len()];
            }
            for ((w, v), &g) in model.params_mut().iter_mut().zip(&mut self.velocity).zip(&grads) {
                *v = mu * *v + g;
                *w -= lr * *v;
            }
        } else {
            for (w, &g) in model.params_mut().iter_mut().zip(&grads) {
                *w -= lr * g;
            }
        }
        if model.params().iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("SGD step produced non-finite weights".to_owned()));
        }
        Ok(())
    }
}

/// One plain SGD update using the model's stored gradients.
pub fn sgd_step<T: Scalar>(model: &mut ModelGraph<T>, config: &SgdConfig) -> Result<()> {
    Sgd::new(*config)?.step(model)
}
