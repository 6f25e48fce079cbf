//! Named parameter store with Adam state.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Adam hyperparameters. Betas/epsilon follow the usual defaults; the
/// learning rate is always chosen by the caller.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct ParamEntry {
    value: Tensor,
    grad: Option<Tensor>,
    moment1: Tensor,
    moment2: Tensor,
}

/// Named parameters plus per-parameter first/second moment buffers and a
/// shared step counter. Name order (lexicographic) is the canonical
/// iteration order everywhere, which keeps checkpoints byte-stable.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamEntry>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::Contract(format!("duplicate parameter name {name}")));
        }
        let shape = value.shape().to_vec();
        self.entries.insert(
            name.to_string(),
            ParamEntry {
                value,
                grad: None,
                moment1: Tensor::zeros(&shape),
                moment2: Tensor::zeros(&shape),
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|e| &e.value)
    }

    /// Replace a parameter value in place; the new tensor must keep the shape.
    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name}")))?;
        if entry.value.shape() != value.shape() {
            return Err(Error::Dimension {
                op: "set_value",
                lhs: entry.value.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        entry.value = value;
        Ok(())
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).and_then(|e| e.grad.as_ref())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), &e.value))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// Add a gradient contribution (sums across a batch of tapes).
    pub fn accumulate_grad(&mut self, name: &str, grad: Tensor) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name}")))?;
        if entry.value.shape() != grad.shape() {
            return Err(Error::Dimension {
                op: "accumulate_grad",
                lhs: entry.value.shape().to_vec(),
                rhs: grad.shape().to_vec(),
            });
        }
        match &mut entry.grad {
            Some(g) => g.add_assign(&grad),
            slot @ None => *slot = Some(grad),
        }
        Ok(())
    }

    pub fn scale_grads(&mut self, c: f64) {
        for entry in self.entries.values_mut() {
            if let Some(g) = &mut entry.grad {
                g.scale_assign(c);
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for entry in self.entries.values_mut() {
            entry.grad = None;
        }
    }

    /// Bias-corrected Adam update over every parameter; every parameter must
    /// carry a gradient, and all gradients are cleared afterwards.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        for (name, entry) in &self.entries {
            if entry.grad.is_none() {
                return Err(Error::Contract(format!(
                    "adam_step: parameter {name} has no gradient"
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        for entry in self.entries.values_mut() {
            let grad = entry.grad.take().expect("checked above");
            for i in 0..grad.numel() {
                let g = grad.data()[i];
                let m = cfg.beta1 * entry.moment1.data()[i] + (1.0 - cfg.beta1) * g;
                let v = cfg.beta2 * entry.moment2.data()[i] + (1.0 - cfg.beta2) * g * g;
                entry.moment1.data_mut()[i] = m;
                entry.moment2.data_mut()[i] = v;
                let m_hat = m / bias1;
                let v_hat = v / bias2;
                entry.value.data_mut()[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
        Ok(())
    }
}
