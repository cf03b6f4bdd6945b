use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{Class, N_CLASSES};
use crate::util::extended_f64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    #[serde(with = "extended_f64")]
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub class: Class,
    pub points: Vec<RocPoint>,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub per_class: [Option<f64>; N_CLASSES],
    pub macro_auc: Option<f64>,
    pub curves: Vec<RocCurve>,
    pub warnings: Vec<String>,
}

/// Exact ROC curve: one point per distinct score plus the ±∞ sentinels.
///
/// A sample is called positive when its score is `>= threshold`. Returns `None`
/// when either class of the binary problem is empty.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Option<Vec<RocPoint>> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        fpr: 1.0,
        tpr: 1.0,
    });
    Some(points)
}

/// Trapezoidal area; tied scores form a diagonal segment, i.e. half credit.
pub fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// One-vs-rest AUC per class; classes without both positives and negatives are
/// left undefined and excluded from the macro mean.
pub fn roc_auc(probs: &[Vec<f64>], truth: &[usize]) -> Result<AucSummary> {
    if probs.len() != truth.len() {
        return Err(Error::shape(truth.len(), probs.len()));
    }
    if probs.iter().any(|p| p.len() != N_CLASSES || p.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidInput(format!("scores must be finite {N_CLASSES}-vectors")));
    }
    let mut per_class = [None; N_CLASSES];
    let mut curves = Vec::new();
    let mut warnings = Vec::new();
    for class in Class::ALL {
        let c = class.index();
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        let positive: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        match roc_curve(&scores, &positive) {
            Some(points) => {
                let auc = trapezoid_auc(&points);
                per_class[c] = Some(auc);
                curves.push(RocCurve {
                    class,
                    points,
                    auc: Some(auc),
                });
            }
            None => {
                let msg = format!("{class}: AUC undefined (needs positives and negatives), excluded from macro AUC");
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_auc = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(AucSummary {
        per_class,
        macro_auc,
        curves,
        warnings,
    })
}
