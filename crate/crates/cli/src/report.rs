//! Markdown report assembled from logged JSON and payloads; no model execution.

use std::fmt::Write;
use std::path::PathBuf;

use breathnet_core::model::Variant;
use breathnet_core::training::{EpochLog, Partition};

use crate::error::Result;
use crate::explain::{overlay_from_dir, ClipExplanation, GlobalImportance};
use crate::figures;
use crate::pipeline::{table1_markdown, AblationTable, MetricsFile, PreprocessSummary, TrainSummary};
use crate::workspace::{read_json, subdirs, write_text, Workspace};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutcome {
    pub path: PathBuf,
    /// Artifacts referenced but absent or unreadable.
    pub missing: Vec<String>,
    pub has_gallery: bool,
}

fn variants_in(dir: &std::path::Path) -> Vec<Variant> {
    subdirs(dir).iter().filter_map(|n| n.parse().ok()).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or("n/a".to_string(), |a| format!("{a:.4}"))
}

pub fn cmd_report(ws: &Workspace) -> Result<ReportOutcome> {
    let out = ws.report_dir();
    let figs = out.join("figures");
    let mut missing = Vec::new();
    let mut md = String::from("# Respiratory sound classification report\n\n");
    let rel = |p: &std::path::Path| p.strip_prefix(&ws.root).unwrap_or(p).display().to_string();

    md.push_str("## Dataset\n\n");
    let pre = ws.preprocess_dir().join("summary.json");
    match read_json::<PreprocessSummary>(&pre) {
        Ok(s) => {
            md.push_str(&table1_markdown(&s.dataset_distribution));
            let _ = writeln!(
                md,
                "\n{} of {} clips passed quality control; {} rejected, {} unreadable.\n",
                s.accepted,
                s.manifest_entries,
                s.rejected.len(),
                s.failed.len()
            );
        }
        Err(_) => {
            missing.push(rel(&pre));
            md.push_str("No preprocessing summary found.\n\n");
        }
    }

    md.push_str("## Training\n\n");
    let runs = variants_in(&ws.root.join("runs"));
    if runs.is_empty() {
        md.push_str("No training runs found.\n\n");
    }
    for v in &runs {
        let dir = ws.run_dir(*v);
        match (read_json::<Vec<EpochLog>>(&dir.join("history.json")), read_json::<TrainSummary>(&dir.join("summary.json"))) {
            (Ok(logs), Ok(s)) => {
                let name = format!("learning_curves_{}.svg", v.name());
                write_text(&figs.join(&name), &figures::learning_curves_svg(&logs, &format!("Learning curves: {}", v.name())))?;
                let _ = writeln!(
                    md,
                    "### {}\n\nBest epoch {} of {} (validation macro-F1 {:.4}, loss {:.4}){}; {} trainable parameters.\n\n![learning curves](figures/{name})\n",
                    v.name(),
                    s.best_epoch,
                    s.epochs_run,
                    s.best_val_macro_f1,
                    s.best_val_loss,
                    if s.stopped_early { ", stopped early" } else { "" },
                    s.trainable_parameters
                );
            }
            _ => missing.push(rel(&dir)),
        }
    }

    md.push_str("## Evaluation\n\n");
    let evals = variants_in(&ws.root.join("evaluation"));
    let mut any_eval = false;
    for v in &evals {
        for p in Partition::ALL {
            let dir = ws.eval_dir(*v, p);
            if !dir.exists() {
                continue;
            }
            let m: MetricsFile = match read_json(&dir.join("metrics.json")) {
                Ok(m) => m,
                Err(_) => {
                    missing.push(rel(&dir.join("metrics.json")));
                    continue;
                }
            };
            any_eval = true;
            let tag = format!("{}_{}", v.name(), p.name());
            let title = format!("{} ({})", v.name(), p.name());
            write_text(&figs.join(format!("confusion_{tag}.svg")), &figures::confusion_svg(&m.confusion, &format!("Confusion matrix: {title}")))?;
            write_text(&figs.join(format!("roc_{tag}.svg")), &figures::roc_svg(&m.roc, &format!("One-vs-rest ROC: {title}")))?;
            let r = &m.report;
            let _ = writeln!(md, "### {title}\n\n| Metric | Value |\n|---|---:|");
            let _ = writeln!(md, "| Accuracy | {:.4} |", r.accuracy);
            let _ = writeln!(md, "| Macro precision | {:.4} |", r.macro_avg.precision);
            let _ = writeln!(md, "| Macro recall | {:.4} |", r.macro_avg.recall);
            let _ = writeln!(md, "| Macro F1-score | {:.4} |", r.macro_avg.f1);
            let _ = writeln!(md, "| Weighted F1-score | {:.4} |", r.weighted_avg.f1);
            let _ = writeln!(md, "| Macro ROC-AUC | {} |\n", opt(r.macro_avg.auc));
            md.push_str("| Class | Precision | Recall | F1-score | Support | ROC-AUC |\n|---|---:|---:|---:|---:|---:|\n");
            for c in &r.per_class {
                let _ = writeln!(md, "| {} | {:.4} | {:.4} | {:.4} | {} | {} |", c.class.name(), c.precision, c.recall, c.f1, c.support, opt(c.auc));
            }
            for w in &r.warnings {
                let _ = writeln!(md, "\nWarning: {w}");
            }
            let _ = writeln!(md, "\n![confusion](figures/confusion_{tag}.svg)\n![roc](figures/roc_{tag}.svg)\n");
        }
    }
    if !any_eval {
        md.push_str("No evaluation results found.\n\n");
    }

    let abl = ws.ablation_dir().join("table.json");
    if abl.exists() {
        md.push_str("## Ablation\n\n");
        match read_json::<AblationTable>(&abl) {
            Ok(t) => {
                md.push_str(&t.markdown());
                md.push('\n');
                for r in &t.rows {
                    if !ws.checkpoint(r.variant).exists() {
                        missing.push(rel(&ws.checkpoint(r.variant)));
                    }
                }
            }
            Err(_) => missing.push(rel(&abl)),
        }
    }

    let mut gallery = String::new();
    for v in variants_in(&ws.root.join("explain")) {
        let dir = ws.explain_dir(v);
        for clip in subdirs(&dir) {
            let cdir = dir.join(&clip);
            let info: ClipExplanation = match read_json(&cdir.join("clip.json")) {
                Ok(i) => i,
                Err(_) => {
                    missing.push(rel(&cdir.join("clip.json")));
                    continue;
                }
            };
            match overlay_from_dir(&cdir) {
                Ok(svg) => {
                    let name = format!("xai_{}_{clip}.svg", v.name());
                    write_text(&figs.join(&name), &svg)?;
                    let _ = writeln!(
                        gallery,
                        "### {} / {clip}\n\nTrue {}, predicted {}; attributions target the {} logit.\n\n![attributions](figures/{name})\n",
                        v.name(),
                        info.label.name(),
                        info.predicted.name(),
                        info.target.name()
                    );
                    for (method, shares) in &info.band_shares {
                        let parts: Vec<String> = shares.iter().map(|(b, s)| format!("{b}: {:.1}%", s * 100.0)).collect();
                        let _ = writeln!(gallery, "- {method} band shares: {}", parts.join(", "));
                    }
                    gallery.push('\n');
                }
                Err(_) => missing.push(rel(&cdir)),
            }
        }
        let gpath = dir.join("global_importance.json");
        if gpath.exists() {
            match read_json::<GlobalImportance>(&gpath) {
                Ok(g) => {
                    let _ = writeln!(
                        gallery,
                        "### Global handcrafted-feature importance ({}, {} samples)\n\n| Rank | Feature | Mean abs SHAP |\n|---:|---|---:|",
                        v.name(),
                        g.n_samples
                    );
                    for f in g.ranking.iter().take(10) {
                        let _ = writeln!(gallery, "| {} | {} | {:.5} |", f.rank, f.name, f.mean_abs_shap);
                    }
                    gallery.push('\n');
                }
                Err(_) => missing.push(rel(&gpath)),
            }
        }
    }
    let has_gallery = !gallery.is_empty();
    if has_gallery {
        md.push_str("## Explainability\n\n");
        md.push_str(&gallery);
    }
    if !missing.is_empty() {
        md.push_str("## Missing artifacts\n\n");
        for m in &missing {
            let _ = writeln!(md, "- {m}");
        }
    }
    let path = out.join("report.md");
    write_text(&path, &md)?;
    Ok(ReportOutcome {
        path,
        missing,
        has_gallery,
    })
}
