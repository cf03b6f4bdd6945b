//! Confusion matrices, precision/recall/F1, one-vs-rest ROC curves and reports.

pub mod roc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{Class, N_CLASSES};
use crate::model::{predict, ModelConfig, ModelParams};

pub use roc::{roc_auc, roc_curve, AucSummary, RocCurve};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..N_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Binary one-vs-rest accuracy `(TP + TN) / N` for a single class.
    pub fn one_vs_rest_accuracy(&self, c: usize) -> f64 {
        let tp = self.counts[c][c];
        let fp = self.col_sum(c) - tp;
        let fn_ = self.row_sum(c) - tp;
        let tn = self.total() - tp - fp - fn_;
        (tp + tn) as f64 / self.total() as f64
    }
}

/// Counts of (true, predicted) label pairs given as class indices.
pub fn confusion(truth: &[usize], predicted: &[usize]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::shape(truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("confusion matrix of zero samples".into()));
    }
    let mut counts = [[0u64; N_CLASSES]; N_CLASSES];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= N_CLASSES || p >= N_CLASSES {
            return Err(Error::InvalidInput(format!("label index {} outside the class set", t.max(p))));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: Class,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// A zero denominator forced one of the metrics to 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetricsSet {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn class_metrics(cm: &ConfusionMatrix) -> ClassMetricsSet {
    let per_class = Class::ALL
        .iter()
        .map(|&class| {
            let c = class.index();
            let tp = cm.counts[c][c];
            let (precision, dp) = ratio(tp, cm.col_sum(c));
            let (recall, dr) = ratio(tp, cm.row_sum(c));
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                class,
                precision,
                recall,
                f1,
                support: cm.row_sum(c),
                degenerate: dp || dr,
            }
        })
        .collect();
    ClassMetricsSet {
        per_class,
        accuracy: cm.accuracy(),
    }
}

/// Unweighted mean of per-class F1.
pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    let m = class_metrics(cm);
    m.per_class.iter().map(|c| c.f1).sum::<f64>() / N_CLASSES as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: Class,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// `None` when the class is absent or is the only class present.
    pub auc: Option<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_samples: u64,
    pub accuracy: f64,
    pub per_class: Vec<ClassReport>,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub micro_avg: Averages,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn build(cm: &ConfusionMatrix, auc: Option<&AucSummary>) -> MetricsReport {
        let m = class_metrics(cm);
        let per_class: Vec<ClassReport> = m
            .per_class
            .iter()
            .map(|c| ClassReport {
                class: c.class,
                precision: c.precision,
                recall: c.recall,
                f1: c.f1,
                support: c.support,
                auc: auc.and_then(|a| a.per_class[c.class.index()]),
                degenerate: c.degenerate,
            })
            .collect();
        let k = N_CLASSES as f64;
        let total = cm.total() as f64;
        let mean = |f: &dyn Fn(&ClassReport) -> f64| per_class.iter().map(f).sum::<f64>() / k;
        let wmean = |f: &dyn Fn(&ClassReport) -> f64| {
            per_class.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / total
        };
        let weighted_auc = auc.and_then(|a| {
            let (mut s, mut w) = (0.0, 0.0);
            for c in &per_class {
                if let Some(v) = a.per_class[c.class.index()] {
                    s += v * c.support as f64;
                    w += c.support as f64;
                }
            }
            (w > 0.0).then(|| s / w)
        });
        let mut warnings: Vec<String> = per_class
            .iter()
            .filter(|c| c.degenerate)
            .map(|c| format!("{}: zero denominator in precision or recall, reported as 0", c.class))
            .collect();
        if let Some(a) = auc {
            warnings.extend(a.warnings.iter().cloned());
        }
        MetricsReport {
            n_samples: cm.total(),
            accuracy: m.accuracy,
            macro_avg: Averages {
                precision: mean(&|c| c.precision),
                recall: mean(&|c| c.recall),
                f1: mean(&|c| c.f1),
                auc: auc.and_then(|a| a.macro_auc),
            },
            weighted_avg: Averages {
                precision: wmean(&|c| c.precision),
                recall: wmean(&|c| c.recall),
                f1: wmean(&|c| c.f1),
                auc: weighted_auc,
            },
            micro_avg: Averages {
                precision: cm.trace() as f64 / total,
                recall: cm.trace() as f64 / total,
                f1: cm.trace() as f64 / total,
                auc: None,
            },
            per_class,
            warnings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub confusion: ConfusionMatrix,
    pub roc: Vec<RocCurve>,
    /// Per-sample `(true index, probabilities)` in input order.
    pub predictions: Vec<(usize, Vec<f64>)>,
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Metrics from per-sample probability rows and true class indices.
pub fn evaluate_scores(truth: &[usize], probs: &[Vec<f64>]) -> Result<Evaluation> {
    let predicted: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let cm = confusion(truth, &predicted)?;
    let auc = roc_auc(probs, truth)?;
    let report = MetricsReport::build(&cm, Some(&auc));
    Ok(Evaluation {
        report,
        confusion: cm,
        roc: auc.curves.clone(),
        predictions: truth.iter().copied().zip(probs.iter().cloned()).collect(),
    })
}

/// Eval-mode inference over `(mel, hand, true class)` samples, in batches.
pub fn evaluate<'a, I>(params: &ModelParams<f32>, cfg: &ModelConfig, samples: I, batch: usize) -> Result<Evaluation>
where
    I: IntoIterator<Item = (&'a [f32], &'a [f32], Class)>,
{
    let mut truth = Vec::new();
    let mut probs = Vec::new();
    let items: Vec<_> = samples.into_iter().collect();
    if items.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate an empty partition".into()));
    }
    for chunk in items.chunks(batch.max(1)) {
        let mut mel = Vec::new();
        let mut hand = Vec::new();
        for (m, h, c) in chunk {
            if cfg.variant.uses_mel() {
                mel.extend_from_slice(m);
            }
            if cfg.variant.uses_hand() {
                hand.extend_from_slice(h);
            }
            truth.push(c.index());
        }
        let p = predict(params, cfg, &mel, &hand, chunk.len())?;
        probs.extend(p.chunks_exact(cfg.n_classes).map(|r| r.iter().map(|&v| v as f64).collect::<Vec<_>>()));
    }
    evaluate_scores(&truth, &probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_are_diagonal() {
        let t = [0, 1, 2, 3, 4, 4, 2];
        let cm = confusion(&t, &t).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert_eq!(cm.counts[i][j], 0);
                }
            }
        }
        let m = class_metrics(&cm);
        assert!(m.per_class.iter().all(|c| c.precision == 1.0 && c.recall == 1.0 && c.f1 == 1.0));
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn empty_and_out_of_range_inputs_error() {
        assert!(confusion(&[], &[]).is_err());
        assert!(confusion(&[0], &[5]).is_err());
        assert!(confusion(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn zero_predicted_positives_is_flagged() {
        let cm = confusion(&[0, 1, 1], &[1, 1, 1]).unwrap();
        let m = class_metrics(&cm);
        let a = &m.per_class[0];
        assert_eq!(a.precision, 0.0);
        assert_eq!(a.f1, 0.0);
        assert!(a.degenerate);
        // absent class: both denominators zero, F1 stays 0 without NaN
        let absent = &m.per_class[4];
        assert_eq!(absent.f1, 0.0);
        assert!(absent.degenerate);
    }

    #[test]
    fn one_vs_rest_accuracy_counts_true_negatives() {
        let cm = confusion(&[0, 0, 1, 2], &[0, 1, 1, 2]).unwrap();
        assert_eq!(cm.one_vs_rest_accuracy(0), 0.75);
        assert_eq!(cm.one_vs_rest_accuracy(3), 1.0);
    }
}
