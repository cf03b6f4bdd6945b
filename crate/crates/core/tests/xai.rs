use breathnet_core::audio::standardize;
use breathnet_core::features::{hand_feature_names, FeaturePair, HAND_DIM};
use breathnet_core::model::gradcheck::{jittered, randn, tiny_config};
use breathnet_core::model::network::logits_from_deep;
use breathnet_core::model::{forward, ConvBlockSpec, ModelConfig, ModelParams, ParamKind, Variant};
use breathnet_core::nn::Mode;
use breathnet_core::rng::{stream, Domain};
use breathnet_core::synth::{tone_recording, SynthSpec};
use breathnet_core::xai::{
    grad_cam, integrated_gradients, integrated_gradients_with, shap_exact, shap_hand_features, shap_sampled,
    silent_baseline,
};
use breathnet_core::{Class, Error};

fn linear(w: Vec<f64>, b: f64) -> impl FnMut(&[Vec<f64>]) -> breathnet_core::Result<Vec<f64>> {
    move |batch: &[Vec<f64>]| Ok(batch.iter().map(|x| b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>()).collect())
}

#[test]
fn exact_shapley_recovers_linear_contributions() {
    let w = vec![0.5, -1.5, 2.0, 0.0, 3.0, -0.25];
    let x = vec![1.0, 2.0, -1.0, 4.0, 0.5, 2.0];
    let mean = vec![0.2, 0.1, 0.3, -1.0, 0.0, 1.0];
    let players: Vec<usize> = (0..6).collect();
    let est = shap_exact(&mut linear(w.clone(), 0.7), &x, &mean, &players).unwrap();
    for i in 0..6 {
        assert!((est.phi[i] - w[i] * (x[i] - mean[i])).abs() < 1e-12);
    }
    // dummy
    assert_eq!(est.phi[3].abs(), 0.0);
    assert!(est.efficiency_gap() < 1e-9);
}

#[test]
fn exact_shapley_is_symmetric_and_efficient_on_interactions() {
    let mut f = |batch: &[Vec<f64>]| -> breathnet_core::Result<Vec<f64>> {
        Ok(batch.iter().map(|v| v[0] * v[1] + (v[2] * v[3]).sin() + v[4].powi(2) + 0.0 * v[5]).collect())
    };
    let x = vec![1.5, 1.5, 0.7, -1.2, 2.0, 9.0];
    let r = vec![0.5, 0.5, 0.1, 0.3, -1.0, 0.0];
    let players: Vec<usize> = (0..6).collect();
    let est = shap_exact(&mut f, &x, &r, &players).unwrap();
    assert!((est.phi[0] - est.phi[1]).abs() < 1e-12);
    assert!(est.phi[5].abs() < 1e-12);
    let total: f64 = est.phi.iter().sum();
    assert!((total - (est.full_value - est.empty_value)).abs() < 1e-9);
    assert!(est.efficiency_gap() < 1e-9);
}

/// Tiny fused network with twelve handcrafted inputs so a 10-player restriction leaves two fixed.
fn hand_model() -> (ModelConfig, ModelParams<f64>, Vec<f64>) {
    let mut cfg = tiny_config(Variant::FullHybrid);
    cfg.hand_dim = 12;
    let p = ModelParams::<f64>::init(&cfg, 3).unwrap();
    let mut rng = stream(0, Domain::Dropout, 0, 0);
    let mel = randn(cfg.mel_len(), 40, 1.0);
    let hand = randn(cfg.hand_dim, 41, 1.0);
    let t = forward(&p, &cfg, &mel, &hand, 1, Mode::Eval, &mut rng).unwrap();
    (cfg, p, t.deep)
}

fn target_logit<'a>(
    cfg: &'a ModelConfig,
    p: &'a ModelParams<f64>,
    deep: &'a [f64],
) -> impl FnMut(&[Vec<f64>]) -> breathnet_core::Result<Vec<f64>> + 'a {
    move |batch: &[Vec<f64>]| {
        let logits = logits_from_deep(p, cfg, deep, &batch.concat(), batch.len())?;
        Ok(logits.chunks_exact(cfg.n_classes).map(|r| r[2]).collect())
    }
}

#[test]
fn sampled_shap_agrees_with_exact_within_three_standard_errors() {
    let (cfg, p, deep) = hand_model();
    let x = randn(12, 42, 1.5);
    let r = randn(12, 43, 0.3);
    let players: Vec<usize> = (1..11).collect();
    let exact = shap_exact(&mut target_logit(&cfg, &p, &deep), &x, &r, &players).unwrap();
    let sampled = shap_sampled(&mut target_logit(&cfg, &p, &deep), &x, &r, &players, 400, 7).unwrap();
    for i in 0..players.len() {
        let d = (sampled.phi[i] - exact.phi[i]).abs();
        assert!(d <= 3.0 * sampled.standard_errors[i] + 1e-9, "player {i}: |{d}| vs SE {}", sampled.standard_errors[i]);
    }
    assert!(sampled.efficiency_gap() < 1e-9);
    assert!((sampled.full_value - exact.full_value).abs() < 1e-12);
}

#[test]
fn standard_error_shrinks_like_one_over_root_n() {
    let (cfg, p, deep) = hand_model();
    let x = randn(12, 44, 1.5);
    let r = vec![0.0; 12];
    let players: Vec<usize> = (0..12).collect();
    let mean_se = |n, seed| {
        let e = shap_sampled(&mut target_logit(&cfg, &p, &deep), &x, &r, &players, n, seed).unwrap();
        e.standard_errors.iter().sum::<f64>() / 12.0
    };
    let ratio = mean_se(800, 1) / mean_se(400, 2);
    let expected = 1.0 / 2f64.sqrt();
    assert!((ratio - expected).abs() < 0.2 * expected, "ratio {ratio}");
}

#[test]
fn fixed_seed_reproduces_sampled_shap() {
    let (cfg, p, deep) = hand_model();
    let x = randn(12, 45, 1.0);
    let r = vec![0.1; 12];
    let players: Vec<usize> = (0..12).collect();
    let run = |seed| shap_sampled(&mut target_logit(&cfg, &p, &deep), &x, &r, &players, 150, seed).unwrap();
    assert_eq!(run(3), run(3));
    assert_ne!(run(3).phi, run(4).phi);
}

fn full_size_tiny(variant: Variant) -> ModelConfig {
    let mut cfg = ModelConfig::default().with_variant(variant);
    cfg.conv_blocks = vec![
        ConvBlockSpec {
            filters: 2,
            kernel: 3,
            pool: 2,
        };
        3
    ];
    cfg.lstm_units_per_direction = 4;
    cfg.attention_dim = 4;
    cfg.hand_hidden = vec![8];
    cfg.fusion_hidden = 8;
    cfg
}

#[test]
fn zero_handcrafted_weights_give_zero_importance() {
    let cfg = full_size_tiny(Variant::FullHybrid);
    let mut p = ModelParams::<f64>::init(&cfg, 1).unwrap();
    for t in p.tensors_mut() {
        if t.name.starts_with("hand.dense1") && t.kind == ParamKind::Weight {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let mut rng = stream(0, Domain::Dropout, 0, 0);
    let mel = randn(cfg.mel_len(), 1, 1.0);
    let hand = randn(HAND_DIM, 2, 1.0);
    let deep = forward(&p, &cfg, &mel, &hand, 1, Mode::Eval, &mut rng).unwrap().deep;
    let map = shap_hand_features(&p, &cfg, &deep, &hand, &vec![0.0; HAND_DIM], Class::Healthy, 100, 0).unwrap();
    assert!(map.values.iter().all(|v| v.abs() < 1e-12));
    assert_eq!(map.feature_names.as_deref(), Some(hand_feature_names()));
    assert_eq!(map.values.len(), 70);
}

fn synth_features(n: usize) -> Vec<FeaturePair> {
    let spec = SynthSpec::default();
    (0..n)
        .map(|i| {
            let class = Class::ALL[i % 5];
            FeaturePair::extract(&standardize(&tone_recording(&spec, class, i / 5).unwrap()).unwrap()).unwrap()
        })
        .collect()
}

#[test]
fn ig_completeness_gap_shrinks_with_steps() {
    let cfg = full_size_tiny(Variant::FullHybrid);
    let p = ModelParams::<f64>::init(&cfg, 0).unwrap();
    let samples = synth_features(20);
    let baseline = silent_baseline(&cfg);
    let mut improved = 0;
    for (i, s) in samples.iter().enumerate() {
        let mel: Vec<f64> = s.mel.iter().map(|&v| v as f64).collect();
        let hand: Vec<f64> = s.hand.iter().map(|&v| v as f64).collect();
        let target = Class::ALL[i % 5];
        let gap = |steps| {
            let m = integrated_gradients(&p, &cfg, &mel, &hand, &baseline, target, steps).unwrap();
            (m.diagnostics["completeness_gap"], m.diagnostics["logit_difference"])
        };
        let (g16, _) = gap(16);
        let (g32, _) = gap(32);
        improved += (g32 < g16) as usize;
        let (g256, df) = gap(256);
        assert!(g256 < 1e-2 * df.abs(), "sample {i}: gap {g256}, logit difference {df}");
    }
    assert!(improved >= 18, "gap shrank on {improved}/20 samples");
}

#[test]
fn ig_is_exact_for_a_linear_model() {
    let w: Vec<f64> = randn(30, 9, 1.0);
    let x = randn(30, 10, 1.0);
    let base = randn(30, 11, 0.2);
    let mut grads = |pts: &[Vec<f64>]| Ok(pts.iter().map(|_| w.clone()).collect());
    let attr = integrated_gradients_with(&x, &base, 8, 4, &mut grads).unwrap();
    for i in 0..30 {
        assert!((attr[i] - w[i] * (x[i] - base[i])).abs() < 1e-12);
    }
}

#[test]
fn grad_cam_is_a_normalized_nonnegative_map() {
    let cfg = tiny_config(Variant::FullHybrid);
    for seed in 0..4 {
        let p = jittered(&cfg, seed);
        let mel = randn(cfg.mel_len(), 50 + seed, 1.0);
        let hand = randn(cfg.hand_dim, 60 + seed, 1.0);
        for class in Class::ALL {
            let m = grad_cam(&p, &cfg, &mel, &hand, class).unwrap();
            assert_eq!(m.values.len(), cfg.mel_len());
            assert!(m.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
            if m.diagnostics["constant_map"] == 0.0 {
                let max = m.values.iter().copied().fold(0.0, f64::max);
                let min = m.values.iter().copied().fold(1.0, f64::min);
                assert_eq!((min, max), (0.0, 1.0));
            } else {
                assert!(m.values.iter().all(|&v| v == 0.0));
            }
        }
    }
}

#[test]
fn attribution_leaves_parameters_untouched() {
    let cfg = tiny_config(Variant::FullHybrid);
    let p = jittered(&cfg, 8);
    let before = p.clone();
    let mel = randn(cfg.mel_len(), 1, 1.0);
    let hand = randn(cfg.hand_dim, 2, 1.0);
    grad_cam(&p, &cfg, &mel, &hand, Class::Copd).unwrap();
    integrated_gradients(&p, &cfg, &mel, &hand, &silent_baseline(&cfg), Class::Copd, 16).unwrap();
    let mut rng = stream(0, Domain::Dropout, 0, 0);
    let deep = forward(&p, &cfg, &mel, &hand, 1, Mode::Eval, &mut rng).unwrap().deep;
    shap_hand_features(&p, &cfg, &deep, &hand, &vec![0.0; cfg.hand_dim], Class::Copd, 100, 1).unwrap();
    assert_eq!(p, before);
}

#[test]
fn spectrogram_methods_refuse_the_handcrafted_only_variant() {
    let cfg = tiny_config(Variant::HandcraftedOnly);
    let p = jittered(&cfg, 1);
    let hand = randn(cfg.hand_dim, 2, 1.0);
    let mel = vec![0.0; cfg.mel_len()];
    assert!(matches!(grad_cam(&p, &cfg, &mel, &hand, Class::Asthma), Err(Error::Unsupported(_))));
    assert!(matches!(
        integrated_gradients(&p, &cfg, &mel, &hand, &mel, Class::Asthma, 16),
        Err(Error::Unsupported(_))
    ));
}
