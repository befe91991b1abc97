use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{Tape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named trainable matrices that outlive any single tape.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Array2<f64>)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    /// Records every parameter as a differentiable leaf, in id order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Tensor> {
        self.values.iter().map(|v| tape.var(v.clone())).collect()
    }

    /// Gradients of the bound leaves after `backward`.
    pub fn grads(&self, tape: &Tape, bound: &[Tensor]) -> Vec<Option<Array2<f64>>> {
        bound.iter().map(|&t| tape.grad(t).cloned()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay, applied as `w -= lr * weight_decay * w`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
        }
    }
}

/// Per-parameter moment accumulators.
#[derive(Clone, Debug)]
pub struct OptimState {
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
    pub step: u64,
}

/// Adaptive-moment optimizer with bias correction and decoupled weight decay.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: OptimState,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || params.values.iter().map(|p| Array2::zeros(p.dim())).collect();
        Adam {
            config,
            state: OptimState {
                m: zeros(),
                v: zeros(),
                step: 0,
            },
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Option<Array2<f64>>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::shape(
                "adam_step",
                format!("{} grads for {} params", grads.len(), params.len()),
            ));
        }
        for (i, g) in grads.iter().enumerate() {
            let g = g
                .as_ref()
                .ok_or_else(|| Error::MissingGrad(params.names[i].clone()))?;
            if g.dim() != params.values[i].dim() {
                return Err(Error::shape("adam_step", format!("grad shape for {}", params.names[i])));
            }
        }
        self.state.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.state.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (i, g) in grads.iter().enumerate() {
            let g = g.as_ref().expect("checked above");
            Zip::from(&mut params.values[i])
                .and(&mut self.state.m[i])
                .and(&mut self.state.v[i])
                .and(g)
                .for_each(|w, m, v, &g| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *w -= lr * (mhat / (vhat.sqrt() + eps) + weight_decay * *w);
                });
        }
        Ok(())
    }
}
