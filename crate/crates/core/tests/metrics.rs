use breathnet_core::evaluation::roc::{roc_curve, trapezoid_auc};
use breathnet_core::evaluation::{class_metrics, confusion, evaluate_scores, ConfusionMatrix, MetricsReport};
use breathnet_core::rng::{stream, Domain};
use breathnet_core::{Class, N_CLASSES};
use proptest::prelude::*;
use rand::Rng;

/// Mann-Whitney statistic: share of positive/negative pairs ranked correctly, ties count half.
fn pair_count_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &p) in positive.iter().enumerate() {
        if !p {
            continue;
        }
        for (j, &q) in positive.iter().enumerate() {
            if q {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn random_problem(seed: u64, n: usize, quantize: bool) -> (Vec<f64>, Vec<bool>) {
    let mut r = stream(seed, Domain::Test, 0, 0);
    let positive: Vec<bool> = (0..n).map(|_| r.random::<f64>() < 0.4).collect();
    let scores = positive
        .iter()
        .map(|&p| {
            let s = r.random::<f64>() + if p { 0.3 } else { 0.0 };
            if quantize {
                (s * 10.0).round() / 10.0
            } else {
                s
            }
        })
        .collect();
    (scores, positive)
}

#[test]
fn trapezoid_auc_equals_pair_counting_on_200_samples() {
    for (seed, quantize) in [(1, false), (2, false), (3, true), (4, true)] {
        let (scores, positive) = random_problem(seed, 200, quantize);
        let auc = trapezoid_auc(&roc_curve(&scores, &positive).unwrap());
        let oracle = pair_count_auc(&scores, &positive);
        assert!((auc - oracle).abs() < 1e-9, "seed {seed}: {auc} vs {oracle}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn auc_is_invariant_to_strictly_increasing_transforms(seed in 0u64..10_000, a in 0.1f64..5.0, b in -2.0f64..2.0) {
        let (scores, positive) = random_problem(seed, 60, seed % 2 == 0);
        prop_assume!(positive.iter().any(|&p| p) && positive.iter().any(|&p| !p));
        let moved: Vec<f64> = scores.iter().map(|s| (a * s + b).exp()).collect();
        let x = trapezoid_auc(&roc_curve(&scores, &positive).unwrap());
        let y = trapezoid_auc(&roc_curve(&moved, &positive).unwrap());
        prop_assert!((x - y).abs() < 1e-12);
        prop_assert!((x - pair_count_auc(&scores, &positive)).abs() < 1e-9);
    }
}

/// 60 COPD samples, 59 recognized, 3 other-class samples called COPD.
fn copd_matrix() -> ConfusionMatrix {
    let copd = Class::Copd.index();
    let mut counts = [[0u64; N_CLASSES]; N_CLASSES];
    for (c, row) in counts.iter_mut().enumerate() {
        row[c] = 40;
    }
    counts[copd][copd] = 59;
    counts[copd][Class::Asthma.index()] = 1;
    counts[Class::Asthma.index()][copd] = 1;
    counts[Class::Healthy.index()][copd] = 1;
    counts[Class::Pneumonia.index()][copd] = 1;
    for c in [Class::Asthma, Class::Healthy, Class::Pneumonia] {
        counts[c.index()][c.index()] -= 1;
    }
    ConfusionMatrix { counts }
}

#[test]
fn copd_row_matches_the_published_rates() {
    let m = class_metrics(&copd_matrix());
    let row = &m.per_class[Class::Copd.index()];
    assert_eq!(row.support, 60);
    assert!((row.precision - 0.9516).abs() < 5e-5, "{}", row.precision);
    assert!((row.recall - 0.9833).abs() < 5e-5, "{}", row.recall);
    assert!((row.f1 - 0.9672).abs() < 5e-5, "{}", row.f1);
}

#[test]
fn per_class_metrics_match_counting_on_1000_samples() {
    let mut r = stream(21, Domain::Test, 0, 0);
    let truth: Vec<usize> = (0..1000).map(|_| r.random_range(0..N_CLASSES)).collect();
    let pred: Vec<usize> = truth
        .iter()
        .map(|&t| if r.random::<f64>() < 0.7 { t } else { r.random_range(0..N_CLASSES) })
        .collect();
    let cm = confusion(&truth, &pred).unwrap();
    let report = MetricsReport::build(&cm, None);
    let mut f1s = Vec::new();
    for c in 0..N_CLASSES {
        let tp = truth.iter().zip(&pred).filter(|&(&t, &p)| t == c && p == c).count() as f64;
        let fp = truth.iter().zip(&pred).filter(|&(&t, &p)| t != c && p == c).count() as f64;
        let fne = truth.iter().zip(&pred).filter(|&(&t, &p)| t == c && p != c).count() as f64;
        let (p, rc) = (tp / (tp + fp), tp / (tp + fne));
        let f1 = 2.0 * p * rc / (p + rc);
        let got = &report.per_class[c];
        assert!((got.precision - p).abs() < 1e-12);
        assert!((got.recall - rc).abs() < 1e-12);
        assert!((got.f1 - f1).abs() < 1e-12);
        assert_eq!(got.support, (tp + fne) as u64);
        f1s.push((f1, tp + fne));
    }
    let acc = truth.iter().zip(&pred).filter(|(t, p)| t == p).count() as f64 / 1000.0;
    assert!((report.accuracy - acc).abs() < 1e-12);
    assert!((report.micro_avg.f1 - acc).abs() < 1e-12);
    assert!((report.micro_avg.precision - acc).abs() < 1e-12);
    let macro_f1 = f1s.iter().map(|f| f.0).sum::<f64>() / 5.0;
    let weighted = f1s.iter().map(|f| f.0 * f.1).sum::<f64>() / 1000.0;
    assert!((report.macro_avg.f1 - macro_f1).abs() < 1e-12);
    assert!((report.weighted_avg.f1 - weighted).abs() < 1e-12);
}

#[test]
fn diagonal_predictions_give_perfect_scores() {
    let truth: Vec<usize> = (0..50).map(|i| i % N_CLASSES).collect();
    let probs: Vec<Vec<f64>> = truth
        .iter()
        .map(|&t| (0..N_CLASSES).map(|c| if c == t { 0.9 } else { 0.025 }).collect())
        .collect();
    let e = evaluate_scores(&truth, &probs).unwrap();
    assert_eq!(e.report.accuracy, 1.0);
    assert_eq!(e.report.macro_avg.f1, 1.0);
    assert_eq!(e.report.macro_avg.auc, Some(1.0));
    assert!(e.report.per_class.iter().all(|c| c.precision == 1.0 && c.recall == 1.0 && c.auc == Some(1.0)));
}
