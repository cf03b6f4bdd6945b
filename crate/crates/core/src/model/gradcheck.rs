//! Finite-difference check of the hand-written backward pass on a tiny network.
//!
//! Central differences at a coarse step; where the stencil crosses a ReLU or
//! max-pool switch, progressively finer steps are tried so the estimate stays
//! on the smooth piece containing the centre.

use super::config::ConvBlockSpec;
use super::{backward, forward, ForwardTrace, ModelConfig, ModelParams, ParamKind, Variant};
use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::rng::{standard_normal, stream, Domain};

/// 16×24 mel input, three 2-filter blocks, 4-unit recurrence, 7 handcrafted inputs.
pub fn tiny_config(variant: Variant) -> ModelConfig {
    let block = ConvBlockSpec {
        filters: 2,
        kernel: 3,
        pool: 2,
    };
    ModelConfig {
        variant,
        input_mels: 16,
        input_frames: 24,
        hand_dim: 7,
        conv_blocks: vec![block; 3],
        conv_dropout: 0.2,
        lstm_units_per_direction: 4,
        attention_dim: 4,
        hand_hidden: vec![6, 5],
        hand_dropout: 0.3,
        fusion_hidden: 6,
        fusion_dropout: 0.3,
        n_classes: 5,
        bn_momentum: 0.9,
        bn_eps: 1e-5,
    }
}

pub fn randn(n: usize, seed: u64, scale: f64) -> Vec<f64> {
    let mut r = stream(seed, Domain::Test, 0, 0);
    (0..n).map(|_| scale * standard_normal(&mut r)).collect()
}

/// Initial parameters with every tensor nudged so no symmetry hides a wrong gradient.
pub fn jittered(cfg: &ModelConfig, seed: u64) -> ModelParams<f64> {
    let mut p = ModelParams::<f64>::init(cfg, seed).expect("tiny config is valid");
    for (i, t) in p.tensors_mut().iter_mut().enumerate() {
        let base = if t.kind == ParamKind::RunningStat { 1000 } else { 500 };
        let noise = randn(t.data.len(), base + i as u64, 0.1);
        let positive = t.kind == ParamKind::RunningStat && t.name.ends_with("running_var");
        for (v, n) in t.data.iter_mut().zip(noise) {
            *v += if positive { n.abs() } else { n };
        }
    }
    p
}

pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(n)).max(1e-6)
}

pub const STEP: f64 = 1e-3;
pub const FINE_STEPS: [f64; 4] = [1e-4, 1e-5, 1e-6, 1e-7];

/// Central difference at `STEP` or the largest fine step whose stencil keeps the
/// centre's activation pattern. Returns the estimate and whether a fine step was used.
pub fn central(pattern: &[u32], eval: &dyn Fn(f64) -> (f64, Vec<u32>)) -> Result<(f64, bool)> {
    for (i, h) in std::iter::once(STEP).chain(FINE_STEPS).enumerate() {
        let (up, pd_up) = eval(h);
        let (down, pd_down) = eval(-h);
        if pd_up == pattern && pd_down == pattern {
            return Ok(((up - down) / (2.0 * h), i > 0));
        }
    }
    Err(Error::InvalidInput(format!("activation switch closer than {:e}", FINE_STEPS[3])))
}

/// Relative error of one gradient block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub name: String,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub variant: Variant,
    pub mode: Mode,
    pub blocks: Vec<BlockError>,
    /// Stencils that needed a fine step, out of `total`.
    pub refined: usize,
    pub total: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&BlockError> {
        self.blocks.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    /// Every block below `tol` and fine steps used on under a tenth of the stencils.
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error() < tol && self.refined * 10 < self.total
    }
}

struct Problem {
    cfg: ModelConfig,
    batch: usize,
    mel: Vec<f64>,
    hand: Vec<f64>,
    upstream: Vec<f64>,
    mode: Mode,
}

impl Problem {
    fn trace(&self, p: &ModelParams<f64>, mel: &[f64], hand: &[f64]) -> ForwardTrace<f64> {
        let mut rng = stream(77, Domain::Dropout, 0, 0);
        forward(p, &self.cfg, mel, hand, self.batch, self.mode, &mut rng).expect("shapes fixed by construction")
    }

    fn value(&self, t: &ForwardTrace<f64>) -> f64 {
        t.logits.iter().zip(&self.upstream).map(|(a, b)| a * b).sum()
    }
}

/// Compares analytic parameter and input gradients of `sum(upstream * logits)`
/// with finite differences on the tiny configuration.
pub fn gradient_check(variant: Variant, mode: Mode, seed: u64) -> Result<GradCheckReport> {
    let cfg = tiny_config(variant);
    let batch = 3;
    let pr = Problem {
        mel: randn(batch * cfg.mel_len(), 1 + seed * 31, 1.0),
        hand: randn(batch * cfg.hand_dim, 2 + seed * 31, 1.0),
        upstream: randn(batch * cfg.n_classes, 3 + seed * 31, 1.0),
        cfg,
        batch,
        mode,
    };
    let p = jittered(&pr.cfg, 9 + seed);
    let trace = pr.trace(&p, &pr.mel, &pr.hand);
    let pattern = trace.activation_pattern();
    let g = backward(&p, &pr.cfg, &trace, &pr.upstream)?;
    let mut report = GradCheckReport {
        variant,
        mode,
        blocks: Vec::new(),
        refined: 0,
        total: 0,
    };

    for t in p.tensors().iter().filter(|t| t.kind.trainable()) {
        let mut numeric = vec![0.0; t.data.len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let eval = |h: f64| {
                let mut q = p.clone();
                q.get_mut(&t.name)[j] += h;
                let tr = pr.trace(&q, &pr.mel, &pr.hand);
                (pr.value(&tr), tr.activation_pattern())
            };
            let (d, fine) = central(&pattern, &eval)?;
            *slot = d;
            report.total += 1;
            report.refined += fine as usize;
        }
        report.blocks.push(BlockError {
            name: t.name.clone(),
            rel_error: rel_err(g.params.get(&t.name), &numeric),
        });
    }

    let input_check = |x: &[f64], analytic: &[f64], is_mel: bool| -> Result<f64> {
        let mut numeric = vec![0.0; x.len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let eval = |h: f64| {
                let mut xp = x.to_vec();
                xp[j] += h;
                let tr = if is_mel {
                    pr.trace(&p, &xp, &pr.hand)
                } else {
                    pr.trace(&p, &pr.mel, &xp)
                };
                (pr.value(&tr), tr.activation_pattern())
            };
            *slot = central(&pattern, &eval)?.0;
        }
        Ok(rel_err(analytic, &numeric))
    };
    if variant.uses_mel() {
        report.blocks.push(BlockError {
            name: "input.mel".into(),
            rel_error: input_check(&pr.mel, &g.mel, true)?,
        });
    }
    if variant.uses_hand() {
        report.blocks.push(BlockError {
            name: "input.hand".into(),
            rel_error: input_check(&pr.hand, &g.hand, false)?,
        });
    }
    Ok(report)
}
