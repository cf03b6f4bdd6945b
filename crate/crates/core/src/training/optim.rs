use serde::{Deserialize, Serialize};

use crate::model::ModelParams;
use crate::nn::Real;

/// Adam over the trainable tensors; running statistics are left alone.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<F: Real>(params: &ModelParams<F>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.data.len()]).collect();
        Adam {
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update<F: Real>(&mut self, params: &mut ModelParams<F>, grads: &ModelParams<F>, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, (p, g)) in params.tensors_mut().iter_mut().zip(grads.tensors()).enumerate() {
            if !p.kind.trainable() {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.data.len() {
                let gj = g.data[j].to_f64_lossy();
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let upd = lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
                p.data[j] -= F::from_f64_lossy(upd);
            }
        }
    }
}

pub fn global_norm<F: Real>(grads: &ModelParams<F>) -> f64 {
    grads
        .tensors()
        .iter()
        .filter(|t| t.kind.trainable())
        .flat_map(|t| t.data.iter())
        .map(|&g| {
            let g = g.to_f64_lossy();
            g * g
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescale all gradients so their joint L2 norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_global_norm<F: Real>(grads: &mut ModelParams<F>, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = F::from_f64_lossy(max_norm / norm);
        for t in grads.tensors_mut() {
            t.data.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

/// Multiply the learning rate by `factor` after `patience` epochs without a
/// validation-loss decrease of more than `min_delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_delta: f64,
    best: f64,
    wait: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, min_delta: f64) -> Self {
        PlateauScheduler {
            lr,
            factor,
            patience,
            min_delta,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    /// Record an epoch's monitored loss; returns true when the rate was reduced.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best - self.min_delta {
            self.best = loss;
            self.wait = 0;
            return false;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            self.lr *= self.factor;
            self.wait = 0;
            return true;
        }
        false
    }
}

/// Stop after `patience` epochs without a strictly higher monitored score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    best: f64,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::NEG_INFINITY,
            wait: 0,
        }
    }

    /// Returns true when training should stop.
    pub fn observe(&mut self, score: f64) -> bool {
        if score > self.best {
            self.best = score;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        self.wait >= self.patience
    }
}
