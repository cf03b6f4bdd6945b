use std::collections::BTreeMap;

use super::{AttributionMap, Method};
use crate::error::{Error, Result};
use crate::labels::Class;
use crate::model::{backward, forward, ModelConfig, ModelParams};
use crate::nn::Mode;
use crate::rng::{standard_normal, stream, Domain};

pub const MIN_STEPS: usize = 8;

/// Mel input of a silent clip: every bin sits at the dB floor, which z-scores to zero.
pub fn silent_baseline(cfg: &ModelConfig) -> Vec<f64> {
    vec![0.0; cfg.mel_len()]
}

/// Midpoint-rule path integral `(x - x′) · mean_k ∇F(x′ + α_k (x - x′))`, `α_k = (k + ½)/m`.
///
/// `grads` maps a batch of path points to their gradients.
pub fn integrated_gradients_with(
    x: &[f64],
    baseline: &[f64],
    steps: usize,
    chunk: usize,
    grads: &mut dyn FnMut(&[Vec<f64>]) -> Result<Vec<Vec<f64>>>,
) -> Result<Vec<f64>> {
    if x.len() != baseline.len() {
        return Err(Error::shape(x.len(), baseline.len()));
    }
    if steps < MIN_STEPS {
        return Err(Error::OutOfRange {
            name: "integrated-gradients steps",
            value: steps as f64,
            min: MIN_STEPS as f64,
            max: f64::INFINITY,
        });
    }
    let mut acc = vec![0.0; x.len()];
    let alphas: Vec<f64> = (0..steps).map(|k| (k as f64 + 0.5) / steps as f64).collect();
    for (ci, block) in alphas.chunks(chunk.max(1)).enumerate() {
        let points: Vec<Vec<f64>> = block
            .iter()
            .map(|&a| baseline.iter().zip(x).map(|(b, v)| b + a * (v - b)).collect())
            .collect();
        let g = grads(&points)?;
        for (j, row) in g.iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "integrated-gradients gradient at step {}",
                    ci * chunk.max(1) + j
                )));
            }
            acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
        }
    }
    Ok(acc
        .iter()
        .zip(x.iter().zip(baseline))
        .map(|(g, (v, b))| (v - b) * g / steps as f64)
        .collect())
}

fn target_logit(params: &ModelParams<f64>, cfg: &ModelConfig, mel: &[f64], hand: &[f64], target: usize) -> Result<f64> {
    let mut rng = stream(0, Domain::Dropout, 0, 0);
    Ok(forward(params, cfg, mel, hand, 1, Mode::Eval, &mut rng)?.logits[target])
}

fn mel_gradients(
    params: &ModelParams<f64>,
    cfg: &ModelConfig,
    hand: &[f64],
    target: usize,
    points: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let b = points.len();
    let mel: Vec<f64> = points.concat();
    let hands: Vec<f64> = if cfg.variant.uses_hand() { hand.repeat(b) } else { Vec::new() };
    let mut rng = stream(0, Domain::Dropout, 0, 0);
    let trace = forward(params, cfg, &mel, &hands, b, Mode::Eval, &mut rng)?;
    let mut up = vec![0.0; b * cfg.n_classes];
    for r in 0..b {
        up[r * cfg.n_classes + target] = 1.0;
    }
    let g = backward(params, cfg, &trace, &up)?;
    Ok(g.mel.chunks_exact(cfg.mel_len()).map(<[f64]>::to_vec).collect())
}

/// IG on the mel input with the handcrafted input held at its actual value.
#[allow(clippy::too_many_arguments)]
pub fn integrated_gradients(
    params: &ModelParams<f64>,
    cfg: &ModelConfig,
    mel: &[f64],
    hand: &[f64],
    baseline: &[f64],
    target: Class,
    steps: usize,
) -> Result<AttributionMap> {
    if !cfg.variant.uses_mel() {
        return Err(Error::Unsupported(format!("variant {} has no spectrogram input", cfg.variant)));
    }
    let t = target.index();
    let values = integrated_gradients_with(mel, baseline, steps, 16, &mut |pts| {
        mel_gradients(params, cfg, hand, t, pts)
    })?;
    let f_x = target_logit(params, cfg, mel, hand, t)?;
    let f_b = target_logit(params, cfg, baseline, hand, t)?;
    let total: f64 = values.iter().sum();
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("completeness_gap".into(), (total - (f_x - f_b)).abs());
    diagnostics.insert("logit_difference".into(), f_x - f_b);
    diagnostics.insert("attribution_sum".into(), total);
    diagnostics.insert("steps".into(), steps as f64);
    Ok(AttributionMap {
        method: Method::IntegratedGradients,
        target_class: target,
        clip_id: None,
        shape: vec![cfg.input_mels, cfg.input_frames],
        baseline: "silent clip (zero z-scored mel)".into(),
        diagnostics,
        feature_names: None,
        standard_errors: None,
        note: None,
        values,
    })
}

/// Spectrogram-level Shapley approximation: IG averaged over silent baselines
/// perturbed with Gaussian noise of standard deviation `sigma`.
#[allow(clippy::too_many_arguments)]
pub fn multi_baseline_ig(
    params: &ModelParams<f64>,
    cfg: &ModelConfig,
    mel: &[f64],
    hand: &[f64],
    target: Class,
    n_baselines: usize,
    sigma: f64,
    steps: usize,
    seed: u64,
) -> Result<AttributionMap> {
    if n_baselines == 0 {
        return Err(Error::InvalidInput("need at least one baseline".into()));
    }
    let mut acc = vec![0.0; mel.len()];
    let mut gaps = Vec::with_capacity(n_baselines);
    for k in 0..n_baselines {
        let mut rng = stream(seed, Domain::Baseline, k as u64, 0);
        let base: Vec<f64> = silent_baseline(cfg)
            .into_iter()
            .map(|v| v + sigma * standard_normal(&mut rng))
            .collect();
        let m = integrated_gradients(params, cfg, mel, hand, &base, target, steps)?;
        gaps.push(m.diagnostics["completeness_gap"]);
        acc.iter_mut().zip(&m.values).for_each(|(a, v)| *a += v / n_baselines as f64);
    }
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("baselines".into(), n_baselines as f64);
    diagnostics.insert("baseline_sigma".into(), sigma);
    diagnostics.insert("steps".into(), steps as f64);
    diagnostics.insert("max_completeness_gap".into(), gaps.iter().copied().fold(0.0, f64::max));
    Ok(AttributionMap {
        method: Method::SpectrogramShapApprox,
        target_class: target,
        clip_id: None,
        shape: vec![cfg.input_mels, cfg.input_frames],
        baseline: format!("{n_baselines} noise-perturbed silent baselines (sigma {sigma})"),
        diagnostics,
        feature_names: None,
        standard_errors: None,
        note: Some(
            "approximation: averaged Integrated Gradients over perturbed silent baselines, not exact pixel-coalition Shapley values"
                .into(),
        ),
        values: acc,
    })
}
