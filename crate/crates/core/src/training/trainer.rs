use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{add_l2_gradient, l2_penalty, smoothed_scce};
use super::optim::{clip_global_norm, global_norm, Adam, EarlyStopping, PlateauScheduler};
use super::split::Partition;
use crate::audio::StandardClip;
use crate::augment::{apply_plan, AugmentPlan, AugmentPolicy};
use crate::error::{Error, Result};
use crate::evaluation::{argmax, confusion, macro_f1};
use crate::features::FeaturePair;
use crate::labels::Class;
use crate::model::{apply_bn_updates, backward, forward, predict, ModelConfig, ModelParams};
use crate::nn::Mode;
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub plateau_min_delta: f64,
    pub early_stop_patience: usize,
    pub label_smoothing: f64,
    pub l2_lambda: f64,
    pub clip_norm: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub augmentation: AugmentPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 3e-4,
            batch_size: 16,
            max_epochs: 80,
            plateau_factor: 0.5,
            plateau_patience: 4,
            plateau_min_delta: 1e-4,
            early_stop_patience: 12,
            label_smoothing: 0.05,
            l2_lambda: 1e-4,
            clip_norm: 5.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            augmentation: AugmentPolicy::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("train config: {m}")));
        if !(self.lr0 > 0.0) || self.batch_size == 0 || self.max_epochs == 0 {
            return bad("lr0, batch_size and max_epochs must be positive");
        }
        if !(0.0..1.0).contains(&self.plateau_factor) || self.plateau_patience == 0 {
            return bad("plateau factor must be in (0, 1) and patience positive");
        }
        if !(0.0..1.0).contains(&self.label_smoothing) || self.l2_lambda < 0.0 || !(self.clip_norm > 0.0) {
            return bad("label_smoothing in [0, 1), l2_lambda >= 0, clip_norm > 0");
        }
        self.augmentation.validate()
    }
}

/// A labelled clip with its unaugmented features.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub clip_id: String,
    pub label: Class,
    /// Waveform, needed only for training-time augmentation.
    pub clip: Option<StandardClip>,
    pub features: FeaturePair,
}

impl Example {
    pub fn from_clip(clip_id: impl Into<String>, label: Class, clip: StandardClip) -> Result<Self> {
        let features = FeaturePair::extract(&clip)?;
        Ok(Example {
            clip_id: clip_id.into(),
            label,
            clip: Some(clip),
            features,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub val_macro_f1: f64,
    /// Rate used during this epoch.
    pub learning_rate: f64,
    /// The scheduler reduced the rate after this epoch.
    pub lr_reduced: bool,
    pub max_grad_norm: f64,
    pub max_clipped_grad_norm: f64,
    pub augmented_samples: u64,
}

/// Counts how many samples of each partition passed through augmentation.
#[derive(Debug, Default)]
pub struct PipelineCounters {
    augmented: [AtomicU64; 3],
    served: [AtomicU64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub augmented: [u64; 3],
    pub served: [u64; 3],
}

impl PipelineCounters {
    pub fn snapshot(&self) -> CounterSnapshot {
        let load = |a: &[AtomicU64; 3]| [0, 1, 2].map(|i| a[i].load(Ordering::Relaxed));
        CounterSnapshot {
            augmented: load(&self.augmented),
            served: load(&self.served),
        }
    }
}

/// Features for one sample; only training samples are ever augmented.
pub fn materialize(
    ex: &Example,
    partition: Partition,
    policy: &AugmentPolicy,
    seed: u64,
    epoch: usize,
    index: usize,
    counters: &PipelineCounters,
) -> Result<FeaturePair> {
    counters.served[partition as usize].fetch_add(1, Ordering::Relaxed);
    if partition != Partition::Train {
        return Ok(ex.features.clone());
    }
    let mut rng = stream(seed, Domain::Augment, epoch as u64, index as u64);
    let plan = AugmentPlan::draw(policy, &mut rng);
    if plan.is_identity() {
        return Ok(ex.features.clone());
    }
    let clip = ex.clip.as_ref().ok_or_else(|| {
        Error::InvalidInput(format!("training example '{}' has no waveform to augment", ex.clip_id))
    })?;
    counters.augmented[partition as usize].fetch_add(1, Ordering::Relaxed);
    FeaturePair::extract(&apply_plan(clip, &plan, &mut rng)?)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: ModelParams<f32>,
    pub best_epoch: usize,
    pub logs: Vec<EpochLog>,
    pub counters: CounterSnapshot,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationScores {
    pub loss: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
}

fn batch_inputs(cfg: &ModelConfig, feats: &[&FeaturePair]) -> (Vec<f32>, Vec<f32>) {
    let mut mel = Vec::new();
    let mut hand = Vec::new();
    for f in feats {
        if cfg.variant.uses_mel() {
            mel.extend_from_slice(&f.mel);
        }
        if cfg.variant.uses_hand() {
            hand.extend_from_slice(&f.hand);
        }
    }
    (mel, hand)
}

/// Eval-mode loss (data + L2), accuracy and macro-F1 over a partition.
pub fn validate(
    params: &ModelParams<f32>,
    cfg: &ModelConfig,
    tc: &TrainConfig,
    examples: &[Example],
    partition: Partition,
    counters: &PipelineCounters,
) -> Result<ValidationScores> {
    if examples.is_empty() {
        return Err(Error::InvalidInput(format!("{partition} partition is empty")));
    }
    let mut loss = 0.0;
    let mut truth = Vec::with_capacity(examples.len());
    let mut pred = Vec::with_capacity(examples.len());
    for (bi, chunk) in examples.chunks(tc.batch_size).enumerate() {
        let feats: Vec<FeaturePair> = chunk
            .iter()
            .enumerate()
            .map(|(i, ex)| materialize(ex, partition, &tc.augmentation, tc.seed, 0, bi * tc.batch_size + i, counters))
            .collect::<Result<_>>()?;
        let refs: Vec<&FeaturePair> = feats.iter().collect();
        let (mel, hand) = batch_inputs(cfg, &refs);
        let probs = predict(params, cfg, &mel, &hand, chunk.len())?;
        let labels: Vec<usize> = chunk.iter().map(|e| e.label.index()).collect();
        let (l, _) = smoothed_scce(&probs, &labels, cfg.n_classes, tc.label_smoothing);
        loss += l * chunk.len() as f64;
        for (row, &y) in probs.chunks_exact(cfg.n_classes).zip(&labels) {
            let r: Vec<f64> = row.iter().map(|&v| v as f64).collect();
            pred.push(argmax(&r));
            truth.push(y);
        }
    }
    let cm = confusion(&truth, &pred)?;
    Ok(ValidationScores {
        loss: loss / examples.len() as f64 + l2_penalty(params, tc.l2_lambda),
        accuracy: cm.accuracy(),
        macro_f1: macro_f1(&cm),
    })
}

/// Full optimization run. `on_epoch` sees every log record as soon as it exists.
pub fn train(
    train_set: &[Example],
    val_set: &[Example],
    model_cfg: &ModelConfig,
    tc: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    tc.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidInput("training needs non-empty train and val partitions".into()));
    }
    let mut params = ModelParams::<f32>::init(model_cfg, tc.seed)?;
    let mut adam = Adam::new(&params, tc.adam_beta1, tc.adam_beta2, tc.adam_eps);
    let mut sched = PlateauScheduler::new(tc.lr0, tc.plateau_factor, tc.plateau_patience, tc.plateau_min_delta);
    let mut stopper = EarlyStopping::new(tc.early_stop_patience);
    let counters = PipelineCounters::default();
    let mut logs = Vec::new();
    let mut best = params.clone();
    let mut best_key = (f64::NEG_INFINITY, f64::INFINITY);
    let mut best_epoch = 0;
    let mut stopped_early = false;

    for epoch in 1..=tc.max_epochs {
        let lr = sched.lr;
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut stream(tc.seed, Domain::Shuffle, epoch as u64, 0));
        let aug_before = counters.snapshot().augmented[Partition::Train as usize];
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        let (mut max_norm, mut max_clipped) = (0.0f64, 0.0f64);

        for (bi, idx) in order.chunks(tc.batch_size).enumerate() {
            let feats: Vec<FeaturePair> = idx
                .par_iter()
                .map(|&i| {
                    materialize(&train_set[i], Partition::Train, &tc.augmentation, tc.seed, epoch, i, &counters)
                })
                .collect::<Result<_>>()?;
            let refs: Vec<&FeaturePair> = feats.iter().collect();
            let (mel, hand) = batch_inputs(model_cfg, &refs);
            let labels: Vec<usize> = idx.iter().map(|&i| train_set[i].label.index()).collect();
            let mut rng = stream(tc.seed, Domain::Dropout, epoch as u64, bi as u64);
            let trace = forward(&params, model_cfg, &mel, &hand, idx.len(), Mode::Train, &mut rng)?;
            let (data_loss, d_logits) = smoothed_scce(&trace.probs, &labels, model_cfg.n_classes, tc.label_smoothing);
            let step_loss = data_loss + l2_penalty(&params, tc.l2_lambda);
            if !step_loss.is_finite() || trace.logits.iter().any(|v| !v.is_finite()) {
                let ids: Vec<&str> = idx.iter().map(|&i| train_set[i].clip_id.as_str()).collect();
                return Err(Error::NonFinite(format!(
                    "loss at epoch {epoch}, batch {bi} (clips {})",
                    ids.join(", ")
                )));
            }
            let mut grads = backward(&params, model_cfg, &trace, &d_logits)?.params;
            add_l2_gradient(&mut grads, &params, tc.l2_lambda);
            let norm = clip_global_norm(&mut grads, tc.clip_norm);
            if !norm.is_finite() {
                return Err(Error::NonFinite(format!("gradient norm at epoch {epoch}, batch {bi}")));
            }
            max_norm = max_norm.max(norm);
            max_clipped = max_clipped.max(global_norm(&grads));
            adam.update(&mut params, &grads, lr);
            apply_bn_updates(&mut params, &trace.bn_updates);
            if let Some(name) = params.first_non_finite() {
                return Err(Error::NonFinite(format!("parameter {name} after epoch {epoch}, batch {bi}")));
            }
            loss_sum += step_loss * idx.len() as f64;
            for (row, &y) in trace.probs.chunks_exact(model_cfg.n_classes).zip(&labels) {
                let r: Vec<f64> = row.iter().map(|&v| v as f64).collect();
                correct += (argmax(&r) == y) as usize;
            }
        }

        let val = validate(&params, model_cfg, tc, val_set, Partition::Val, &counters)?;
        let lr_reduced = sched.observe(val.loss);
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss: val.loss,
            train_accuracy: correct as f64 / train_set.len() as f64,
            val_accuracy: val.accuracy,
            val_macro_f1: val.macro_f1,
            learning_rate: lr,
            lr_reduced,
            max_grad_norm: max_norm,
            max_clipped_grad_norm: max_clipped,
            augmented_samples: counters.snapshot().augmented[Partition::Train as usize] - aug_before,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4} acc {:.3} | val loss {:.4} acc {:.3} F1 {:.3} | lr {:.2e}",
            log.train_loss,
            log.train_accuracy,
            log.val_loss,
            log.val_accuracy,
            log.val_macro_f1,
            lr
        );
        if val.macro_f1 > best_key.0 || (val.macro_f1 == best_key.0 && val.loss < best_key.1) {
            best_key = (val.macro_f1, val.loss);
            best = params.clone();
            best_epoch = epoch;
        }
        on_epoch(&log);
        logs.push(log);
        if stopper.observe(val.macro_f1) {
            stopped_early = epoch < tc.max_epochs;
            break;
        }
    }
    let snap = counters.snapshot();
    debug_assert_eq!(snap.augmented[Partition::Val as usize], 0);
    debug_assert_eq!(snap.augmented[Partition::Test as usize], 0);
    Ok(TrainOutcome {
        best,
        best_epoch,
        logs,
        counters: snap,
        stopped_early,
    })
}
