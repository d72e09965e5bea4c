use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use super::NeuralError;
use crate::matrix::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for a list of flat parameter groups. Moments are kept in f64.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(cfg: AdamConfig, group_sizes: &[usize]) -> Self {
        Self {
            cfg,
            m: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    /// One group per weight matrix and one per bias vector, in layer order.
    pub fn for_model<F: Real>(cfg: AdamConfig, model: &Mlp<F>) -> Self {
        let sizes: Vec<usize> = model
            .layers()
            .iter()
            .flat_map(|l| [l.weights.as_slice().len(), l.bias.len()])
            .collect();
        Self::new(cfg, &sizes)
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// One bias-corrected Adam step over every group.
    pub fn update<F: Real>(&mut self, params: &mut [&mut [F]], grads: &[&[F]]) -> Result<(), NeuralError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NeuralError::ShapeMismatch {
                what: "parameter groups",
                expected: self.m.len(),
                found: params.len().min(grads.len()),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let n = self.m[i].len();
            if p.len() != n || g.len() != n {
                return Err(NeuralError::ShapeMismatch {
                    what: "parameter group size",
                    expected: n,
                    found: if p.len() != n { p.len() } else { g.len() },
                });
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..p.len() {
                let gk = g[k].to_f64();
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                p[k] = F::from_f64(p[k].to_f64() - lr * mhat / (vhat.sqrt() + eps));
            }
        }
        Ok(())
    }

    /// Applies one step to a model's parameters.
    pub fn step_model<F: Real>(&mut self, model: &mut Mlp<F>, grads: &Gradients<F>) -> Result<(), NeuralError> {
        if grads.layers.len() != model.layers().len() {
            return Err(NeuralError::ShapeMismatch {
                what: "gradient layers",
                expected: model.layers().len(),
                found: grads.layers.len(),
            });
        }
        let g: Vec<&[F]> = grads
            .layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect();
        let mut p: Vec<&mut [F]> = model
            .layers_mut()
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect();
        self.update(&mut p, &g)
    }
}
