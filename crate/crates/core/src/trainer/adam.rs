//! Adam with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled: `p -= lr * weight_decay * p` alongside the Adam step.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

/// First and second moment estimates, one slot per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    steps: Vec<u64>,
}

impl Adam {
    pub fn new(config: AdamConfig, shapes: &[(usize, usize)]) -> Self {
        Self {
            config,
            m: shapes.iter().map(|(r, c)| vec![0.0; r * c]).collect(),
            v: shapes.iter().map(|(r, c)| vec![0.0; r * c]).collect(),
            steps: vec![0; shapes.len()],
        }
    }

    pub fn for_store(config: AdamConfig, store: &ParamStore) -> Self {
        let shapes: Vec<_> = store.iter().map(|(_, m)| m.shape()).collect();
        Self::new(config, &shapes)
    }

    /// Steps taken by parameter slot `index`.
    pub fn steps(&self, index: usize) -> u64 {
        self.steps[index]
    }

    fn check(grad: &Matrix, name: &str) -> Result<()> {
        if let Some(pos) = grad.data().iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of {name} at element {pos} is {}",
                grad.data()[pos]
            )));
        }
        Ok(())
    }

    /// Updates one parameter in place.
    pub fn step_one(&mut self, index: usize, param: &mut Matrix, grad: &Matrix, name: &str) -> Result<()> {
        if param.shape() != grad.shape() || self.m[index].len() != param.len() {
            return Err(Error::Dimension(format!(
                "{name}: parameter {}x{}, gradient {}x{}",
                param.rows(),
                param.cols(),
                grad.rows(),
                grad.cols()
            )));
        }
        Self::check(grad, name)?;
        let c = self.config;
        self.steps[index] += 1;
        let t = self.steps[index] as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let m = &mut self.m[index];
        let v = &mut self.v[index];
        for (((p, &g), m), v) in param.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= c.lr * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * *p);
        }
        Ok(())
    }

    /// Updates every parameter of `store` whose `trainable` flag is set.
    ///
    /// All gradients are checked before anything is modified, so a
    /// non-finite gradient leaves the store untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Matrix], trainable: &[bool]) -> Result<()> {
        if grads.len() != store.len() || trainable.len() != store.len() {
            return Err(Error::Dimension(format!(
                "{} parameters, {} gradients, {} trainable flags",
                store.len(),
                grads.len(),
                trainable.len()
            )));
        }
        for id in store.ids() {
            if trainable[id.index()] {
                Self::check(&grads[id.index()], store.name(id))?;
            }
        }
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if !trainable[id.index()] {
                continue;
            }
            let name = store.name(id).to_string();
            self.step_one(id.index(), store.get_mut(id), &grads[id.index()], &name)?;
        }
        Ok(())
    }
}
