//! preprocess, train, evaluate and ablate.

use std::fs;
use std::path::PathBuf;

use breathnet_core::audio::{decode_wav, quality_check, standardize_stages, QcConfig, Verdict};
use breathnet_core::evaluation::{evaluate, ConfusionMatrix, MetricsReport, RocCurve};
use breathnet_core::features::FeaturePair;
use breathnet_core::model::{Checkpoint, Variant};
use breathnet_core::training::{
    split_dataset, train, CounterSnapshot, DatasetManifest, EpochLog, Example, ManifestEntry, Partition,
    SplitAssignment,
};
use breathnet_core::util::extended_f64;
use breathnet_core::{Class, N_CLASSES};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Context, Result};
use crate::figures;
use crate::store::{read_store, write_hand_csv, write_store, StoreEntry, StoredClip};
use crate::workspace::{read_json, write_json, write_text, Workspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub class: Class,
    pub count: usize,
}

fn distribution(labels: impl Iterator<Item = Class>) -> Vec<ClassCount> {
    let mut n = [0usize; N_CLASSES];
    labels.for_each(|c| n[c.index()] += 1);
    Class::ALL
        .iter()
        .map(|&class| ClassCount {
            class,
            count: n[class.index()],
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedClip {
    pub clip_id: String,
    pub label: Class,
    pub reason: String,
    #[serde(with = "extended_f64")]
    pub snr_estimate_db: f64,
    pub clipping_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedClip {
    pub clip_id: String,
    pub label: Class,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub manifest_entries: usize,
    /// Class distribution of the manifest.
    pub dataset_distribution: Vec<ClassCount>,
    pub accepted: usize,
    pub accepted_distribution: Vec<ClassCount>,
    pub rejected: Vec<RejectedClip>,
    pub failed: Vec<FailedClip>,
    pub qc: QcConfig,
}

enum ClipOutcome {
    Accepted(StoredClip),
    Rejected(RejectedClip),
    Failed(FailedClip),
}

fn process_entry(e: &ManifestEntry, qc: &QcConfig) -> ClipOutcome {
    let fail = |error: String| {
        ClipOutcome::Failed(FailedClip {
            clip_id: e.clip_id.clone(),
            label: e.label,
            error,
        })
    };
    let bytes = match fs::read(&e.path) {
        Ok(b) => b,
        Err(err) => return fail(format!("cannot read {}: {err}", e.path.display())),
    };
    let stages = match decode_wav(&bytes).and_then(|r| standardize_stages(&r)) {
        Ok(s) => s,
        Err(err) => return fail(err.to_string()),
    };
    let report = quality_check(&stages.zscored, qc);
    if report.verdict == Verdict::Reject {
        return ClipOutcome::Rejected(RejectedClip {
            clip_id: e.clip_id.clone(),
            label: e.label,
            reason: report.reason,
            snr_estimate_db: report.snr_estimate_db,
            clipping_fraction: report.clipping_fraction,
        });
    }
    match FeaturePair::extract(&stages.zscored) {
        Ok(features) => ClipOutcome::Accepted(StoredClip {
            entry: StoreEntry {
                clip_id: e.clip_id.clone(),
                label: e.label,
                patient_id: e.patient_id.clone(),
            },
            clip: stages.zscored.into_samples(),
            features,
        }),
        Err(err) => fail(err.to_string()),
    }
}

pub fn table1_markdown(dist: &[ClassCount]) -> String {
    let mut s = String::from("| Class | Number of samples |\n|---|---:|\n");
    for c in dist {
        s.push_str(&format!("| {} | {} |\n", c.class.name(), c.count));
    }
    s.push_str(&format!("| Total | {} |\n", dist.iter().map(|c| c.count).sum::<usize>()));
    s
}

/// Standardize, screen and featurize every manifest entry into the feature store.
pub fn preprocess(cfg: &RunConfig) -> Result<PreprocessSummary> {
    let manifest = DatasetManifest::read_csv(&cfg.paths.manifest)
        .ctx(format!("manifest {}", cfg.paths.manifest.display()))?;
    if manifest.is_empty() {
        return Err(CliError::data(format!("manifest {} has no entries", cfg.paths.manifest.display())));
    }
    let outcomes: Vec<ClipOutcome> = manifest
        .entries
        .par_iter()
        .map(|e| process_entry(e, &cfg.preprocessing))
        .collect();
    let (mut accepted, mut rejected, mut failed) = (Vec::new(), Vec::new(), Vec::new());
    for o in outcomes {
        match o {
            ClipOutcome::Accepted(c) => accepted.push(c),
            ClipOutcome::Rejected(r) => rejected.push(r),
            ClipOutcome::Failed(f) => {
                log::warn!("{}: {}", f.clip_id, f.error);
                failed.push(f)
            }
        }
    }
    let ws = Workspace::new(&cfg.paths.workdir);
    fs::create_dir_all(ws.store().parent().unwrap())?;
    write_store(&ws.store(), &accepted)?;
    write_hand_csv(&ws.hand_csv(), &accepted)?;
    let summary = PreprocessSummary {
        manifest_entries: manifest.len(),
        dataset_distribution: distribution(manifest.entries.iter().map(|e| e.label)),
        accepted: accepted.len(),
        accepted_distribution: distribution(accepted.iter().map(|c| c.entry.label)),
        rejected,
        failed,
        qc: cfg.preprocessing,
    };
    write_json(&ws.preprocess_dir().join("summary.json"), &summary)?;
    write_text(&ws.preprocess_dir().join("table1.md"), &table1_markdown(&summary.dataset_distribution))?;
    Ok(summary)
}

/// Seeded split of the stored clips; also written to `split.json`.
pub fn split_store(cfg: &RunConfig, ws: &Workspace, clips: &[StoredClip]) -> Result<SplitAssignment> {
    let manifest = DatasetManifest::new(
        clips
            .iter()
            .map(|c| ManifestEntry {
                clip_id: c.entry.clip_id.clone(),
                path: PathBuf::new(),
                label: c.entry.label,
                patient_id: c.entry.patient_id.clone(),
            })
            .collect(),
    )?;
    let split = split_dataset(&manifest, cfg.split.ratios, cfg.seed)?;
    write_json(&ws.split(), &split)?;
    Ok(split)
}

pub fn partition_examples(
    clips: &[StoredClip],
    split: &SplitAssignment,
    p: Partition,
    with_waveform: bool,
) -> Result<Vec<Example>> {
    clips
        .iter()
        .filter(|c| split.partition_of(&c.entry.clip_id) == Some(p))
        .map(|c| {
            if with_waveform {
                c.to_example()
            } else {
                Ok(Example {
                    clip_id: c.entry.clip_id.clone(),
                    label: c.entry.label,
                    clip: None,
                    features: c.features.clone(),
                })
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub variant: Variant,
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub best_val_macro_f1: f64,
    pub best_val_loss: f64,
    pub total_parameters: usize,
    pub trainable_parameters: usize,
    pub partition_sizes: [usize; 3],
    pub pipeline_counters: CounterSnapshot,
}

pub fn train_variant(
    cfg: &RunConfig,
    ws: &Workspace,
    clips: &[StoredClip],
    split: &SplitAssignment,
    variant: Variant,
) -> Result<TrainSummary> {
    let model_cfg = cfg.model.clone().with_variant(variant);
    let tc = cfg.train_config();
    let train_set = partition_examples(clips, split, Partition::Train, true)?;
    let val_set = partition_examples(clips, split, Partition::Val, false)?;
    let n_test = split.assignments.values().filter(|&&p| p == Partition::Test).count();
    let mut on_epoch = |l: &EpochLog| {
        log::debug!(
            "{} epoch {}: train loss {:.4} acc {:.3}, val loss {:.4} acc {:.3} f1 {:.3}, lr {:.2e}",
            variant,
            l.epoch,
            l.train_loss,
            l.train_accuracy,
            l.val_loss,
            l.val_accuracy,
            l.val_macro_f1,
            l.learning_rate
        )
    };
    let outcome = train(&train_set, &val_set, &model_cfg, &tc, &mut on_epoch)?;
    let best = &outcome.logs[outcome.best_epoch - 1];
    let summary = TrainSummary {
        variant,
        seed: cfg.seed,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.logs.len(),
        stopped_early: outcome.stopped_early,
        best_val_macro_f1: best.val_macro_f1,
        best_val_loss: best.val_loss,
        total_parameters: outcome.best.total_count(),
        trainable_parameters: outcome.best.trainable_count(),
        partition_sizes: [train_set.len(), val_set.len(), n_test],
        pipeline_counters: outcome.counters,
    };
    let dir = ws.run_dir(variant);
    fs::create_dir_all(&dir)?;
    let meta = serde_json::json!({
        "variant": variant,
        "seed": cfg.seed,
        "best_epoch": outcome.best_epoch,
        "training": tc,
    });
    Checkpoint::new(model_cfg, outcome.best, meta)?.save(&ws.checkpoint(variant))?;
    write_json(&dir.join("history.json"), &outcome.logs)?;
    write_json(&dir.join("summary.json"), &summary)?;
    write_text(
        &dir.join("learning_curves.svg"),
        &figures::learning_curves_svg(&outcome.logs, &format!("Learning curves: {}", variant.name())),
    )?;
    Ok(summary)
}

pub fn cmd_train(cfg: &RunConfig, variant: Variant) -> Result<TrainSummary> {
    let ws = Workspace::new(&cfg.paths.workdir);
    let clips = read_store(&ws.store())?;
    let split = split_store(cfg, &ws, &clips)?;
    train_variant(cfg, &ws, &clips, &split, variant)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub clip_id: String,
    pub label: Class,
    pub predicted: Class,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub variant: Variant,
    pub partition: Partition,
    pub report: MetricsReport,
    pub confusion: ConfusionMatrix,
    pub roc: Vec<RocCurve>,
    pub predictions: Vec<Prediction>,
}

pub fn load_checkpoint(ws: &Workspace, variant: Variant) -> Result<Checkpoint> {
    let path = ws.checkpoint(variant);
    if !path.exists() {
        return Err(CliError::data(format!(
            "no checkpoint for variant {variant} at {}; run `breathnet train --variant {variant}` first",
            path.display()
        )));
    }
    Ok(Checkpoint::load(&path)?)
}

pub fn evaluate_variant(
    ws: &Workspace,
    clips: &[StoredClip],
    split: &SplitAssignment,
    variant: Variant,
    partition: Partition,
) -> Result<MetricsFile> {
    let ck = load_checkpoint(ws, variant)?;
    let members: Vec<&StoredClip> = clips
        .iter()
        .filter(|c| split.partition_of(&c.entry.clip_id) == Some(partition))
        .collect();
    let ev = evaluate(
        &ck.params,
        &ck.config,
        members.iter().map(|c| (c.features.mel.as_slice(), c.features.hand.as_slice(), c.entry.label)),
        16,
    )?;
    let predictions = members
        .iter()
        .zip(&ev.predictions)
        .map(|(c, (_, p))| Prediction {
            clip_id: c.entry.clip_id.clone(),
            label: c.entry.label,
            predicted: Class::from_index(breathnet_core::evaluation::argmax(p)).unwrap(),
            probabilities: p.clone(),
        })
        .collect();
    let out = MetricsFile {
        variant,
        partition,
        report: ev.report,
        confusion: ev.confusion,
        roc: ev.roc,
        predictions,
    };
    let dir = ws.eval_dir(variant, partition);
    write_json(&dir.join("metrics.json"), &out)?;
    let tag = format!("{} ({})", variant.name(), partition.name());
    write_text(&dir.join("confusion.svg"), &figures::confusion_svg(&out.confusion, &format!("Confusion matrix: {tag}")))?;
    write_text(&dir.join("roc.svg"), &figures::roc_svg(&out.roc, &format!("One-vs-rest ROC: {tag}")))?;
    Ok(out)
}

pub fn cmd_evaluate(cfg: &RunConfig, variant: Variant, partition: Partition) -> Result<MetricsFile> {
    let ws = Workspace::new(&cfg.paths.workdir);
    let clips = read_store(&ws.store())?;
    let split = split_store(cfg, &ws, &clips)?;
    evaluate_variant(&ws, &clips, &split, variant, partition)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub macro_roc_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub partition: Partition,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn markdown(&self) -> String {
        let mut s = String::from("| Model variant | Accuracy | Macro F1-score | Macro ROC-AUC |\n|---|---:|---:|---:|\n");
        for r in &self.rows {
            let auc = r.macro_roc_auc.map_or("n/a".to_string(), |a| format!("{a:.4}"));
            s.push_str(&format!("| {} | {:.4} | {:.4} | {auc} |\n", r.variant.name(), r.accuracy, r.macro_f1));
        }
        s
    }
}

/// Trains and tests every variant under the same protocol, split and seed.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<AblationTable> {
    let ws = Workspace::new(&cfg.paths.workdir);
    let clips = read_store(&ws.store())?;
    let split = split_store(cfg, &ws, &clips)?;
    let mut rows = Vec::new();
    for v in Variant::ALL {
        train_variant(cfg, &ws, &clips, &split, v)?;
        let m = evaluate_variant(&ws, &clips, &split, v, Partition::Test)?;
        rows.push(AblationRow {
            variant: v,
            accuracy: m.report.accuracy,
            macro_f1: m.report.macro_avg.f1,
            macro_roc_auc: m.report.macro_avg.auc,
        });
    }
    let table = AblationTable {
        partition: Partition::Test,
        rows,
    };
    write_json(&ws.ablation_dir().join("table.json"), &table)?;
    write_text(&ws.ablation_dir().join("table.md"), &table.markdown())?;
    Ok(table)
}

pub fn read_metrics(ws: &Workspace, v: Variant, p: Partition) -> Result<MetricsFile> {
    read_json(&ws.eval_dir(v, p).join("metrics.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_lists_every_class_and_total() {
        let d = distribution([Class::Asthma, Class::Copd, Class::Copd].into_iter());
        let md = table1_markdown(&d);
        assert!(md.contains("| COPD | 2 |"));
        assert!(md.contains("| Healthy | 0 |"));
        assert!(md.contains("| Total | 3 |"));
    }
}
