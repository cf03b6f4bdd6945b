//! Acceptance criteria, one test per criterion. Criteria run one at a time so the
//! wall-clock budgets are measured without interference; each prints a verdict line:
//!
//! ```text
//! cargo test -p breathnet-cli --test acceptance -- --nocapture
//! ```

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use breathnet_cli::pipeline::{cmd_evaluate, cmd_train, preprocess};
use breathnet_cli::RunConfig;
use breathnet_core::audio::{restandardize, zscore, ClipStage, StandardClip, CLIP_LEN};
use breathnet_core::dsp::{RealFft, C64};
use breathnet_core::evaluation::roc::{roc_curve, trapezoid_auc};
use breathnet_core::evaluation::{class_metrics, ConfusionMatrix};
use breathnet_core::features::layout::{self, ZCR_MEAN};
use breathnet_core::features::stft::stft_samples;
use breathnet_core::features::{hand_feature_names, FeaturePair, HAND_DIM};
use breathnet_core::model::gradcheck::{gradient_check, jittered, randn, tiny_config};
use breathnet_core::model::network::logits_from_deep;
use breathnet_core::model::{forward, ConvBlockSpec, ModelConfig, ModelParams, Variant};
use breathnet_core::nn::layers::{attention_forward, softmax_rows};
use breathnet_core::nn::Mode;
use breathnet_core::rng::{standard_normal, stream, Domain};
use breathnet_core::synth::{tone_recording, write_tone_dataset, SynthSpec};
use breathnet_core::training::{smoothed_scce, split_dataset, DatasetManifest, ManifestEntry, Partition};
use breathnet_core::xai::gradcam::cam_from_maps;
use breathnet_core::xai::{grad_cam, integrated_gradients, integrated_gradients_with, shap_exact, shap_sampled, silent_baseline};
use breathnet_core::{audio::standardize, Class, N_CLASSES};
use rand::Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn criterion(n: u32, title: &str, budget: Option<Duration>, body: impl FnOnce()) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let took = start.elapsed();
    let over = budget.is_some_and(|b| took > b);
    let verdict = match (&outcome, over) {
        (Ok(()), false) => "PASS".to_string(),
        (Ok(()), true) => format!("FAIL (over the {:.0} s budget)", budget.unwrap().as_secs_f64()),
        (Err(_), _) => "FAIL".to_string(),
    };
    println!("criterion {n}: {verdict} [{:.1} s] {title}", took.as_secs_f64());
    if let Err(e) = outcome {
        std::panic::resume_unwind(e);
    }
    assert!(!over, "criterion {n} took {took:?}");
}

fn check(ok: bool, what: &str) {
    println!("    {} {what}", if ok { "ok  " } else { "FAIL" });
    assert!(ok, "{what}");
}

// ------------------------------------------------------------------ 1

#[test]
fn criterion_1_numeric_core() {
    criterion(1, "numeric-core property suite", Some(Duration::from_secs(60)), || {
        // STFT: a 1 kHz tone peaks at bin 64 in every frame; Parseval on the FFT
        let tone: Vec<f32> = (0..CLIP_LEN).map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / 16_000.0).sin() as f32).collect();
        let spec = stft_samples(&restandardize(&tone).unwrap().into_samples());
        let peaks_ok = (0..spec.n_frames).all(|t| (0..spec.n_bins).max_by(|&a, &b| spec.get(a, t).total_cmp(&spec.get(b, t))) == Some(64));
        check(peaks_ok, "1 kHz tone peaks at STFT bin 64 in every frame");
        let mut r = stream(1, Domain::Test, 0, 0);
        let x: Vec<f64> = (0..1024).map(|_| standard_normal(&mut r)).collect();
        let mut fft = RealFft::new(1024);
        let mut out = vec![C64::new(0.0, 0.0); fft.bins()];
        fft.forward(&x, &mut out);
        let e_time: f64 = x.iter().map(|v| v * v).sum();
        let e_freq: f64 = out.iter().enumerate().map(|(k, c)| if k == 0 || k == 512 { c.norm_sqr() } else { 2.0 * c.norm_sqr() }).sum::<f64>() / 1024.0;
        check((e_time - e_freq).abs() < 1e-9 * e_time, "Parseval energy identity");

        // handcrafted layout and degenerate inputs
        let names = hand_feature_names();
        check(names.len() == HAND_DIM && HAND_DIM == 70, "70 named handcrafted features");
        let blocks = [
            layout::MFCC_MEAN,
            layout::MFCC_STD,
            layout::ZCR_MEAN..layout::BANDWIDTH_STD + 1,
            layout::CHROMA_MEAN,
            layout::CHROMA_STD,
        ];
        let contiguous = blocks.windows(2).all(|w| w[0].end == w[1].start) && blocks[0].start == 0 && blocks[4].end == 70;
        check(contiguous, "MFCC / ZCR-centroid-bandwidth / chroma blocks tile 0..70");
        check(names[layout::ZCR_MEAN] == "zcr_mean" && names[layout::CHROMA_MEAN.start] == "chroma_mean_A", "block names");
        let silent = FeaturePair::extract(&StandardClip::new(vec![0.0; CLIP_LEN], ClipStage::Zscored).unwrap()).unwrap();
        check(silent.mel.iter().all(|&v| v == 0.0) && silent.hand.iter().all(|v| v.is_finite()), "silent clip gives finite features");
        let square: Vec<f32> = (0..CLIP_LEN).map(|i| if (i / 16) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let sq = FeaturePair::extract(&StandardClip::new(zscore(&square), ClipStage::Zscored).unwrap()).unwrap();
        check((sq.hand[ZCR_MEAN] as f64 - 1.0 / 16.0).abs() < 2e-3, "500 Hz square wave ZCR = 1/16");

        // softmax and attention
        let z = randn(10, 2, 3.0);
        let p = softmax_rows(&z, 5);
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.0).collect();
        let q = softmax_rows(&shifted, 5);
        check(p.chunks(5).all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-12), "softmax rows sum to 1");
        check(p.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-12), "softmax shift invariance");
        let (b, t, w, a) = (2, 7, 3, 4);
        let h = randn(b * t * w, 3, 1.0);
        let (_, cache) = attention_forward(b, t, w, a, &h, &randn(w * a, 4, 1.0), &randn(a, 5, 1.0), &randn(a, 6, 1.0));
        check(cache.alpha.chunks(t).all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-12 && r.iter().all(|&v| v > 0.0)), "attention weights form a distribution");
        let same: Vec<f64> = (0..b * t).flat_map(|_| [0.3, -1.0, 2.0]).collect();
        let (_, c2) = attention_forward(b, t, w, a, &same, &randn(w * a, 4, 1.0), &randn(a, 5, 1.0), &randn(a, 6, 1.0));
        check(c2.alpha.iter().all(|&v| (v - 1.0 / t as f64).abs() < 1e-12), "identical frames get uniform attention");

        // finite differences on the tiny network, every variant and mode
        for v in [Variant::FullHybrid, Variant::DeepOnly, Variant::HandcraftedOnly, Variant::CnnOnly, Variant::NoAttention] {
            for mode in [Mode::Train, Mode::Eval] {
                let r = gradient_check(v, mode, 0).unwrap();
                let w = r.worst().unwrap();
                check(r.passes(1e-4), &format!("{v} {mode:?}: max rel. error {:.2e} ({}), {}/{} fine stencils", w.rel_error, w.name, r.refined, r.total));
            }
        }

        // loss identities
        let probs = [0.2, 0.3, 0.1, 0.25, 0.15];
        let (l0, _) = smoothed_scce(&probs, &[1], 5, 0.0);
        check((l0 + 0.3f64.ln()).abs() < 1e-12, "zero smoothing reduces to cross-entropy");
        let (lu, _) = smoothed_scce(&[0.2; 5], &[3], 5, 0.05);
        check((lu - 5f64.ln()).abs() < 1e-12, "uniform prediction costs ln 5");
    });
}

// ------------------------------------------------------------------ 2

fn reduced_model() -> ModelConfig {
    ModelConfig {
        conv_blocks: vec![ConvBlockSpec { filters: 2, kernel: 3, pool: 2 }; 3],
        lstm_units_per_direction: 4,
        attention_dim: 4,
        hand_hidden: vec![8],
        fusion_hidden: 8,
        ..ModelConfig::default()
    }
}

#[test]
fn criterion_2_attribution_axioms() {
    criterion(2, "attribution-axiom suite", Some(Duration::from_secs(300)), || {
        // IG on a linear model is exact
        let w = randn(40, 1, 1.0);
        let x = randn(40, 2, 1.0);
        let base = randn(40, 3, 0.3);
        let attr = integrated_gradients_with(&x, &base, 8, 4, &mut |pts: &[Vec<f64>]| Ok(pts.iter().map(|_| w.clone()).collect())).unwrap();
        check((0..40).all(|i| (attr[i] - w[i] * (x[i] - base[i])).abs() < 1e-12), "IG exact on a linear model");

        // completeness-gap convergence on the network over 20 tone clips
        let cfg = reduced_model();
        let params = ModelParams::<f64>::init(&cfg, 0).unwrap();
        let spec = SynthSpec::default();
        let baseline = silent_baseline(&cfg);
        let (mut shrank, mut tight) = (0, 0);
        for i in 0..20 {
            let class = Class::ALL[i % 5];
            let f = FeaturePair::extract(&standardize(&tone_recording(&spec, class, i / 5).unwrap()).unwrap()).unwrap();
            let mel: Vec<f64> = f.mel.iter().map(|&v| v as f64).collect();
            let hand: Vec<f64> = f.hand.iter().map(|&v| v as f64).collect();
            let gap = |m| {
                let a = integrated_gradients(&params, &cfg, &mel, &hand, &baseline, class, m).unwrap();
                (a.diagnostics["completeness_gap"], a.diagnostics["logit_difference"])
            };
            let (g16, _) = gap(16);
            let (g32, _) = gap(32);
            let (g256, df) = gap(256);
            shrank += (g32 < g16) as usize;
            tight += (g256 < 1e-2 * df.abs()) as usize;
        }
        check(shrank >= 18, &format!("gap(2m) < gap(m) on {shrank}/20 clips (need 18)"));
        check(tight == 20, &format!("gap(256) < 1% of |F(x) - F(x')| on {tight}/20 clips"));

        // exact Shapley: linear oracle and the axioms
        let wl = [0.5, -1.5, 2.0, 0.0, 3.0, -0.25];
        let xl = [1.0, 2.0, -1.0, 4.0, 0.5, 2.0];
        let ml = [0.2, 0.1, 0.3, -1.0, 0.0, 1.0];
        let mut lin = |b: &[Vec<f64>]| Ok(b.iter().map(|v| 0.7 + v.iter().zip(&wl).map(|(a, c)| a * c).sum::<f64>()).collect());
        let players: Vec<usize> = (0..6).collect();
        let e = shap_exact(&mut lin, &xl, &ml, &players).unwrap();
        check((0..6).all(|i| (e.phi[i] - wl[i] * (xl[i] - ml[i])).abs() < 1e-12), "exact Shapley = w_i (x_i - mean_i)");
        let mut inter = |b: &[Vec<f64>]| Ok(b.iter().map(|v| v[0] * v[1] + (v[2] * v[3]).sin() + v[4] * v[4] + 0.0 * v[5]).collect());
        let xs = [1.5, 1.5, 0.7, -1.2, 2.0, 9.0];
        let rs = [0.5, 0.5, 0.1, 0.3, -1.0, 0.0];
        let e = shap_exact(&mut inter, &xs, &rs, &players).unwrap();
        check(e.efficiency_gap() < 1e-9, "efficiency within 1e-9");
        check((e.phi[0] - e.phi[1]).abs() < 1e-12, "symmetry");
        check(e.phi[5].abs() < 1e-12, "dummy");

        // sampled SHAP within 3 SE of exact on a 10-player restriction of the network
        let mut hc = tiny_config(Variant::FullHybrid);
        hc.hand_dim = 12;
        let hp = ModelParams::<f64>::init(&hc, 3).unwrap();
        let mut rng = stream(0, Domain::Dropout, 0, 0);
        let deep = forward(&hp, &hc, &randn(hc.mel_len(), 40, 1.0), &randn(12, 41, 1.0), 1, Mode::Eval, &mut rng).unwrap().deep;
        let predict = || {
            let (hp, hc, deep) = (&hp, &hc, &deep);
            move |b: &[Vec<f64>]| -> breathnet_core::Result<Vec<f64>> {
                Ok(logits_from_deep(hp, hc, deep, &b.concat(), b.len())?.chunks_exact(5).map(|r| r[2]).collect())
            }
        };
        let xh = randn(12, 42, 1.5);
        let rh = randn(12, 43, 0.3);
        let sub: Vec<usize> = (1..11).collect();
        let exact = shap_exact(&mut predict(), &xh, &rh, &sub).unwrap();
        let sampled = shap_sampled(&mut predict(), &xh, &rh, &sub, 400, 7).unwrap();
        let within = (0..10).filter(|&i| (sampled.phi[i] - exact.phi[i]).abs() <= 3.0 * sampled.standard_errors[i] + 1e-9).count();
        check(within == 10, &format!("sampled SHAP within 3 SE of exact on {within}/10 players"));

        // Grad-CAM
        let gc = tiny_config(Variant::FullHybrid);
        let mut nonneg = true;
        for seed in 0..3 {
            let p = jittered(&gc, seed);
            let mel = randn(gc.mel_len(), 50 + seed, 1.0);
            let hand = randn(gc.hand_dim, 60 + seed, 1.0);
            for class in Class::ALL {
                let m = grad_cam(&p, &gc, &mel, &hand, class).unwrap();
                nonneg &= m.values.iter().all(|&v| (0.0..=1.0).contains(&v));
            }
        }
        check(nonneg, "Grad-CAM maps are non-negative and normalized");
        let a = [0.5, -1.0, 2.0, 0.0, -0.2, 1.5];
        let cam = cam_from_maps(&a, &[0.3; 6], 1);
        check(cam.iter().zip(&a).all(|(c, v)| (c - 0.3 * v.max(0.0)).abs() < 1e-15), "single channel: CAM = ReLU(alpha A)");
    });
}

// ------------------------------------------------------------------ 3

fn breathnet(config: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_breathnet"))
        .arg("--config")
        .arg(config)
        .arg("--strict-deterministic")
        .args(args)
        .env("BREATHNET_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn criterion_3_pipeline_determinism() {
    criterion(3, "strict-deterministic end-to-end runs give byte-identical JSON", None, || {
        let dir = tempfile::tempdir().unwrap();
        let (manifest, _) = write_tone_dataset(&dir.path().join("data"), &SynthSpec::default()).unwrap();
        let work = dir.path().join("work");
        let config = dir.path().join("run.toml");
        // augmentation on so its random draws are part of the replay
        fs::write(&config, common::small_config(&manifest, &work, 2, true)).unwrap();
        let mut runs = Vec::new();
        for _ in 0..2 {
            let _ = fs::remove_dir_all(&work);
            breathnet(&config, &["preprocess"]);
            breathnet(&config, &["train"]);
            breathnet(&config, &["evaluate", "--partition", "test"]);
            breathnet(&config, &["explain"]);
            runs.push(common::digests(&work, &["json"]));
        }
        check(runs[0].len() >= 10, &format!("{} JSON files per run", runs[0].len()));
        let differing: Vec<&String> = runs[0].iter().zip(&runs[1]).filter(|(a, b)| a != b).map(|(a, _)| &a.0).collect();
        check(runs[0].len() == runs[1].len() && differing.is_empty(), &format!("byte-identical JSON (differing: {differing:?})"));
        let store = common::digests(&work, &["bin"]);
        check(!store.is_empty(), "feature store and checkpoint written");
    });
}

// ------------------------------------------------------------------ 4

#[test]
fn criterion_4_synthetic_learnability() {
    criterion(4, "tone dataset: 100% train accuracy within 30 epochs, >= 95% held out", None, || {
        let fx = common::Fixture::new(20);
        let text = common::config_text(&fx.manifest, &fx.path().join("work"), common::TONE_MODEL, "max_epochs = 30\n", true);
        let cfg = RunConfig::from_toml(&text).unwrap();
        let s = preprocess(&cfg).unwrap();
        check(s.manifest_entries == 100 && s.accepted == 100, &format!("{} of {} clips accepted", s.accepted, s.manifest_entries));
        let t = cmd_train(&cfg, Variant::FullHybrid).unwrap();
        check(t.epochs_run <= 30, &format!("{} epochs run, best epoch {}", t.epochs_run, t.best_epoch));
        let train = cmd_evaluate(&cfg, Variant::FullHybrid, Partition::Train).unwrap();
        let val = cmd_evaluate(&cfg, Variant::FullHybrid, Partition::Val).unwrap();
        let test = cmd_evaluate(&cfg, Variant::FullHybrid, Partition::Test).unwrap();
        println!("    validation accuracy {:.4} (not gating)", val.report.accuracy);
        check(train.report.accuracy == 1.0, &format!("training accuracy {:.4}", train.report.accuracy));
        check(test.report.accuracy >= 0.95, &format!("held-out (test) accuracy {:.4} on {} clips", test.report.accuracy, test.report.n_samples));
    });
}

// ------------------------------------------------------------------ 5

fn pair_count_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, _) in positive.iter().enumerate().filter(|(_, &p)| p) {
        for (j, _) in positive.iter().enumerate().filter(|(_, &p)| !p) {
            pairs += 1.0;
            wins += if scores[i] > scores[j] {
                1.0
            } else if scores[i] == scores[j] {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / pairs
}

#[test]
fn criterion_5_metric_correctness() {
    criterion(5, "AUC vs pair counting; published COPD row", None, || {
        for seed in 0..4u64 {
            let mut r = stream(seed, Domain::Test, 5, 0);
            let positive: Vec<bool> = (0..200).map(|_| r.random::<f64>() < 0.35).collect();
            let scores: Vec<f64> = positive
                .iter()
                .map(|&p| {
                    let s = r.random::<f64>() + if p { 0.25 } else { 0.0 };
                    if seed % 2 == 1 { (s * 8.0).round() / 8.0 } else { s }
                })
                .collect();
            let auc = trapezoid_auc(&roc_curve(&scores, &positive).unwrap());
            let oracle = pair_count_auc(&scores, &positive);
            check((auc - oracle).abs() < 1e-9, &format!("seed {seed}: trapezoid {auc:.12} vs pairs {oracle:.12}"));
        }
        let copd = Class::Copd.index();
        let mut counts = [[0u64; N_CLASSES]; N_CLASSES];
        for (c, row) in counts.iter_mut().enumerate() {
            row[c] = 40;
        }
        counts[copd][copd] = 59;
        counts[copd][Class::Asthma.index()] = 1;
        for c in [Class::Asthma, Class::Healthy, Class::Pneumonia] {
            counts[c.index()][copd] = 1;
            counts[c.index()][c.index()] -= 1;
        }
        let m = class_metrics(&ConfusionMatrix { counts });
        let row = &m.per_class[copd];
        check(row.support == 60, "COPD support 60");
        check((row.precision - 0.9516).abs() < 5e-5, &format!("precision {:.4}", row.precision));
        check((row.recall - 0.9833).abs() < 5e-5, &format!("recall {:.4}", row.recall));
        check((row.f1 - 0.9672).abs() < 5e-5, &format!("F1 {:.4}", row.f1));
    });
}

// ------------------------------------------------------------------ 6

#[test]
fn criterion_6_splitter() {
    criterion(6, "Table-1-shaped manifest splits 70/15/15 with 182 test clips", None, || {
        let table1 = [288usize, 104, 401, 133, 285];
        let mut entries = Vec::new();
        for class in Class::ALL {
            for i in 0..table1[class.index()] {
                entries.push(ManifestEntry {
                    clip_id: format!("{}_{i:03}", class.name()),
                    path: format!("{i}.wav").into(),
                    label: class,
                    patient_id: None,
                });
            }
        }
        let m = DatasetManifest::new(entries).unwrap();
        check(m.len() == 1211, "1,211 entries");
        let split = split_dataset(&m, [0.7, 0.15, 0.15], 0).unwrap();
        let counts = split.counts(&m);
        for class in Class::ALL {
            let c = class.index();
            let n = table1[c] as f64;
            let ok = [0.7, 0.15, 0.15].iter().enumerate().all(|(p, share)| (counts[p][c] as f64 - n * share).abs() <= 1.0);
            check(ok, &format!("{}: train/val/test = {}/{}/{}", class.name(), counts[0][c], counts[1][c], counts[2][c]));
        }
        let test: usize = counts[Partition::Test as usize].iter().sum();
        check(test == 182, &format!("test partition has {test} clips"));
    });
}

// ------------------------------------------------------------------ 7

/// Needs the real corpus: set `BREATHNET_REAL_CONFIG` to a run configuration whose
/// manifest points at it. Hours of CPU time; reported, never gating.
#[test]
fn criterion_7_conditional_reproduction() {
    let Ok(path) = std::env::var("BREATHNET_REAL_CONFIG") else {
        println!("criterion 7: SKIPPED (not gating; set BREATHNET_REAL_CONFIG to run on the real corpus)");
        return;
    };
    let cfg = RunConfig::load(Path::new(&path)).unwrap();
    preprocess(&cfg).unwrap();
    let table = breathnet_cli::pipeline::cmd_ablate(&cfg).unwrap();
    let row = |v: Variant| table.rows.iter().find(|r| r.variant == v).unwrap().clone();
    let full = row(Variant::FullHybrid);
    let f1 = |v: Variant| row(v).macro_f1;
    println!(
        "criterion 7: REPORTED (accuracy {:.4} in [0.86, 0.96]: {}, macro ROC-AUC {:?} >= 0.95, F1 ordering full > no_attention > cnn_only: {}, full > deep_only > handcrafted_only: {})",
        full.accuracy,
        (0.86..=0.96).contains(&full.accuracy),
        full.macro_roc_auc,
        f1(Variant::FullHybrid) > f1(Variant::NoAttention) && f1(Variant::NoAttention) > f1(Variant::CnnOnly),
        f1(Variant::FullHybrid) > f1(Variant::DeepOnly) && f1(Variant::DeepOnly) > f1(Variant::HandcraftedOnly),
    );
}
