use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{AttributionMap, Method};
use crate::error::{Error, Result};
use crate::features::hand_feature_names;
use crate::labels::Class;
use crate::model::network::logits_from_deep;
use crate::model::{ModelConfig, ModelParams};
use crate::rng::{stream, Domain};

pub const MAX_EXACT_PLAYERS: usize = 14;
pub const MIN_PERMUTATIONS: usize = 100;

/// Value function over a batch of full feature vectors.
pub type Predict<'a> = dyn FnMut(&[Vec<f64>]) -> Result<Vec<f64>> + 'a;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapEstimate {
    /// One value per player, in `players` order.
    pub phi: Vec<f64>,
    /// Monte-Carlo standard errors (zero in exact mode).
    pub standard_errors: Vec<f64>,
    /// `f(x)` and `f(all players masked)`.
    pub full_value: f64,
    pub empty_value: f64,
}

impl ShapEstimate {
    pub fn efficiency_gap(&self) -> f64 {
        (self.phi.iter().sum::<f64>() - (self.full_value - self.empty_value)).abs()
    }
}

/// `x` with the players outside `mask` replaced by the reference values.
fn coalition(x: &[f64], reference: &[f64], players: &[usize], mask: impl Fn(usize) -> bool) -> Vec<f64> {
    let mut v = x.to_vec();
    for (pi, &f) in players.iter().enumerate() {
        if !mask(pi) {
            v[f] = reference[f];
        }
    }
    v
}

fn check(x: &[f64], reference: &[f64], players: &[usize]) -> Result<()> {
    if x.len() != reference.len() {
        return Err(Error::shape(x.len(), reference.len()));
    }
    let mut seen = vec![false; x.len()];
    for &p in players {
        if p >= x.len() || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidInput(format!("invalid or repeated player index {p}")));
        }
    }
    Ok(())
}

/// Exact Shapley values by coalition enumeration. Non-player features stay at `x`.
pub fn shap_exact(predict: &mut Predict, x: &[f64], reference: &[f64], players: &[usize]) -> Result<ShapEstimate> {
    check(x, reference, players)?;
    let n = players.len();
    if n > MAX_EXACT_PLAYERS {
        return Err(Error::OutOfRange {
            name: "exact Shapley players",
            value: n as f64,
            min: 1.0,
            max: MAX_EXACT_PLAYERS as f64,
        });
    }
    let inputs: Vec<Vec<f64>> = (0..1usize << n)
        .map(|s| coalition(x, reference, players, |pi| s >> pi & 1 == 1))
        .collect();
    let mut values = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(512) {
        values.extend(predict(chunk)?);
    }
    // w(s) = s! (n - s - 1)! / n!
    let mut fact = vec![1.0f64; n + 1];
    for i in 1..=n {
        fact[i] = fact[i - 1] * i as f64;
    }
    let mut phi = vec![0.0; n];
    for s in 0..1usize << n {
        let size = s.count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if s >> i & 1 == 0 {
                let w = fact[size] * fact[n - size - 1] / fact[n];
                *p += w * (values[s | 1 << i] - values[s]);
            }
        }
    }
    Ok(ShapEstimate {
        phi,
        standard_errors: vec![0.0; n],
        full_value: values[(1 << n) - 1],
        empty_value: values[0],
    })
}

/// Permutation-sampling Shapley estimate with per-player standard errors.
pub fn shap_sampled(
    predict: &mut Predict,
    x: &[f64],
    reference: &[f64],
    players: &[usize],
    n_permutations: usize,
    seed: u64,
) -> Result<ShapEstimate> {
    check(x, reference, players)?;
    if n_permutations < MIN_PERMUTATIONS {
        return Err(Error::OutOfRange {
            name: "Shapley permutations",
            value: n_permutations as f64,
            min: MIN_PERMUTATIONS as f64,
            max: f64::INFINITY,
        });
    }
    let n = players.len();
    let mut rng = stream(seed, Domain::Shap, 0, 0);
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    let (mut full_value, mut empty_value) = (0.0, 0.0);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..n_permutations {
        order.shuffle(&mut rng);
        let mut present = vec![false; n];
        let mut path = Vec::with_capacity(n + 1);
        path.push(coalition(x, reference, players, |_| false));
        for &pi in &order {
            present[pi] = true;
            path.push(coalition(x, reference, players, |q| present[q]));
        }
        let v = predict(&path)?;
        empty_value = v[0];
        full_value = v[n];
        for (k, &pi) in order.iter().enumerate() {
            let d = v[k + 1] - v[k];
            sum[pi] += d;
            sum_sq[pi] += d * d;
        }
    }
    let t = n_permutations as f64;
    let phi: Vec<f64> = sum.iter().map(|s| s / t).collect();
    let standard_errors = sum_sq
        .iter()
        .zip(&phi)
        .map(|(sq, m)| ((sq / t - m * m).max(0.0) * t / (t - 1.0) / t).sqrt())
        .collect();
    Ok(ShapEstimate {
        phi,
        standard_errors,
        full_value,
        empty_value,
    })
}

/// Mean handcrafted vector of a seeded draw of at most `n` background samples.
pub fn background_mean(hands: &[&[f64]], n: usize, seed: u64) -> Result<Vec<f64>> {
    if hands.is_empty() {
        return Err(Error::InvalidInput("empty background set".into()));
    }
    let mut idx: Vec<usize> = (0..hands.len()).collect();
    idx.shuffle(&mut stream(seed, Domain::Background, 0, 0));
    idx.truncate(n.max(1));
    let dim = hands[0].len();
    let mut mean = vec![0.0; dim];
    for &i in &idx {
        mean.iter_mut().zip(hands[i]).for_each(|(m, v)| *m += v / idx.len() as f64);
    }
    Ok(mean)
}

/// SHAP over all handcrafted features of one sample. The deep embedding is
/// computed once; masked features take the background means.
#[allow(clippy::too_many_arguments)]
pub fn shap_hand_features(
    params: &ModelParams<f64>,
    cfg: &ModelConfig,
    deep: &[f64],
    hand: &[f64],
    background: &[f64],
    target: Class,
    n_permutations: usize,
    seed: u64,
) -> Result<AttributionMap> {
    let t = target.index();
    let k = cfg.n_classes;
    let mut predict = |batch: &[Vec<f64>]| -> Result<Vec<f64>> {
        let flat: Vec<f64> = batch.concat();
        let logits = logits_from_deep(params, cfg, deep, &flat, batch.len())?;
        Ok(logits.chunks_exact(k).map(|r| r[t]).collect())
    };
    let players: Vec<usize> = (0..hand.len()).collect();
    let est = shap_sampled(&mut predict, hand, background, &players, n_permutations, seed)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("efficiency_gap".into(), est.efficiency_gap());
    diagnostics.insert("full_value".into(), est.full_value);
    diagnostics.insert("empty_value".into(), est.empty_value);
    diagnostics.insert("permutations".into(), n_permutations as f64);
    let names = if hand.len() == crate::features::HAND_DIM {
        Some(hand_feature_names().to_vec())
    } else {
        None
    };
    Ok(AttributionMap {
        method: Method::Shap,
        target_class: target,
        clip_id: None,
        shape: vec![hand.len()],
        baseline: "background mean of handcrafted features".into(),
        diagnostics,
        feature_names: names,
        standard_errors: Some(est.standard_errors),
        note: None,
        values: est.phi,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub rank: usize,
    pub index: usize,
    pub name: String,
    pub mean_abs_shap: f64,
}

/// Mean |φ| per feature across samples, ranked (ties by feature index).
pub fn global_importance(phis: &[Vec<f64>], names: &[String]) -> Result<Vec<FeatureImportance>> {
    let dim = names.len();
    if phis.is_empty() || phis.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidInput(format!("need attribution vectors of length {dim}")));
    }
    let mut mean = vec![0.0; dim];
    for p in phis {
        mean.iter_mut().zip(p).for_each(|(m, v)| *m += v.abs() / phis.len() as f64);
    }
    let mut idx: Vec<usize> = (0..dim).collect();
    idx.sort_by(|&a, &b| mean[b].total_cmp(&mean[a]).then(a.cmp(&b)));
    Ok(idx
        .into_iter()
        .enumerate()
        .map(|(r, i)| FeatureImportance {
            rank: r + 1,
            index: i,
            name: names[i].clone(),
            mean_abs_shap: mean[i],
        })
        .collect())
}

/// Kendall's tau-a between two score vectors over the same items.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += ((a[i] - a[j]) * (b[i] - b[j])).signum();
        }
    }
    s / (n * (n - 1) / 2) as f64
}

/// Kendall agreement of two importance rankings over the first ranking's top `k`.
pub fn top_k_agreement(first: &[FeatureImportance], second: &[FeatureImportance], k: usize) -> f64 {
    let by_index: BTreeMap<usize, f64> = second.iter().map(|f| (f.index, f.mean_abs_shap)).collect();
    let top: Vec<&FeatureImportance> = first.iter().take(k).collect();
    let a: Vec<f64> = top.iter().map(|f| f.mean_abs_shap).collect();
    let b: Vec<f64> = top.iter().map(|f| by_index.get(&f.index).copied().unwrap_or(0.0)).collect();
    kendall_tau(&a, &b)
}
