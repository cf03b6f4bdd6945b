//! Attribution payloads per clip plus a global SHAP ranking.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use breathnet_core::evaluation::argmax;
use breathnet_core::features::{hand_feature_names, mel_filterbank};
use breathnet_core::model::{forward, Checkpoint, ModelConfig, ModelParams, Variant};
use breathnet_core::nn::Mode;
use breathnet_core::rng::{stream, Domain};
use breathnet_core::training::{Partition, SplitAssignment};
use breathnet_core::util::{f32_from_le_bytes, f32_to_le_bytes};
use breathnet_core::xai::{
    self, background_mean, global_importance, grad_cam, integrated_gradients, multi_baseline_ig, shap_hand_features,
    silent_baseline, AttributionMap, FeatureImportance, Method,
};
use breathnet_core::Class;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, XaiConfig};
use crate::error::{CliError, Result};
use crate::figures::{self, Panel};
use crate::pipeline::{load_checkpoint, split_store};
use crate::store::{read_store, StoredClip};
use crate::workspace::{read_json, write_json, write_text, Workspace};

pub const BAND_EDGES_HZ: [f64; 4] = [0.0, 400.0, 2000.0, 8000.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipExplanation {
    pub clip_id: String,
    pub label: Class,
    pub predicted: Class,
    pub target: Class,
    pub probabilities: Vec<f64>,
    pub mel_shape: [usize; 2],
    pub methods: Vec<Method>,
    /// Methods the variant cannot support, with the reason.
    pub skipped: BTreeMap<String, String>,
    /// Share of |attribution| per frequency band, per spectrogram method.
    pub band_shares: BTreeMap<String, Vec<(String, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportance {
    pub variant: Variant,
    pub target: String,
    pub n_samples: usize,
    pub permutations: usize,
    pub clip_ids: Vec<String>,
    pub ranking: Vec<FeatureImportance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainSummary {
    pub variant: Variant,
    pub clips: Vec<String>,
    pub global_importance: bool,
}

struct Model {
    cfg: ModelConfig,
    params: ModelParams<f64>,
}

impl Model {
    fn from_checkpoint(ck: &Checkpoint) -> Self {
        Model {
            cfg: ck.config.clone(),
            params: ck.params.cast::<f64>(),
        }
    }

    fn inputs(&self, c: &StoredClip) -> (Vec<f64>, Vec<f64>) {
        let mel = if self.cfg.variant.uses_mel() {
            c.features.mel.iter().map(|&v| v as f64).collect()
        } else {
            Vec::new()
        };
        let hand = if self.cfg.variant.uses_hand() {
            c.features.hand.iter().map(|&v| v as f64).collect()
        } else {
            Vec::new()
        };
        (mel, hand)
    }

    /// (probabilities, deep embedding)
    fn run(&self, mel: &[f64], hand: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rng = stream(0, Domain::Dropout, 0, 0);
        let t = forward(&self.params, &self.cfg, mel, hand, 1, Mode::Eval, &mut rng)?;
        Ok((t.probs, t.deep))
    }
}

pub fn default_methods(x: &XaiConfig) -> Vec<Method> {
    let mut m = vec![Method::GradCam, Method::IntegratedGradients, Method::Shap];
    if x.spectrogram_approx {
        m.push(Method::SpectrogramShapApprox);
    }
    m
}

fn supported(variant: Variant, m: Method) -> std::result::Result<(), String> {
    let ok = match m {
        Method::Shap => variant.uses_hand(),
        _ => variant.uses_mel(),
    };
    if ok {
        Ok(())
    } else {
        Err(format!("variant {variant} has no {} input", if m == Method::Shap { "handcrafted" } else { "spectrogram" }))
    }
}

fn explain_clip(
    model: &Model,
    clip: &StoredClip,
    methods: &[Method],
    background: Option<&[f64]>,
    x: &XaiConfig,
    seed: u64,
    dir: &Path,
) -> Result<ClipExplanation> {
    let (mel, hand) = model.inputs(clip);
    let (probs, deep) = model.run(&mel, &hand)?;
    let predicted = Class::from_index(argmax(&probs)).unwrap();
    let target = predicted;
    let mut maps = Vec::new();
    let mut skipped = BTreeMap::new();
    for &m in methods {
        if let Err(why) = supported(model.cfg.variant, m) {
            skipped.insert(m.name().to_string(), why);
            continue;
        }
        let (p, c) = (&model.params, &model.cfg);
        let mut map = match m {
            Method::GradCam => grad_cam(p, c, &mel, &hand, target)?,
            Method::IntegratedGradients => integrated_gradients(p, c, &mel, &hand, &silent_baseline(c), target, x.ig_steps)?,
            Method::Shap => {
                let bg = background.ok_or_else(|| CliError::data("no background set for SHAP"))?;
                shap_hand_features(p, c, &deep, &hand, bg, target, x.shap_permutations, seed)?
            }
            Method::SpectrogramShapApprox => multi_baseline_ig(
                p,
                c,
                &mel,
                &hand,
                target,
                x.approx_baselines,
                x.approx_sigma,
                x.approx_steps,
                seed,
            )?,
        };
        map.clip_id = Some(clip.entry.clip_id.clone());
        maps.push(map);
    }
    let cid = &clip.entry.clip_id;
    let cdir = dir.join(cid);
    fs::create_dir_all(&cdir)?;
    let centers = &mel_filterbank().centers_hz;
    let mut band_shares = BTreeMap::new();
    for m in &maps {
        m.save(&cdir, m.method.name())?;
        if m.shape.len() == 2 {
            band_shares.insert(m.method.name().to_string(), xai::band_shares(&m.values, m.shape[0], centers, &BAND_EDGES_HZ));
        }
    }
    if !mel.is_empty() {
        fs::write(cdir.join("input_mel.f32"), f32_to_le_bytes(&clip.features.mel))?;
    }
    let info = ClipExplanation {
        clip_id: cid.clone(),
        label: clip.entry.label,
        predicted,
        target,
        probabilities: probs,
        mel_shape: [model.cfg.input_mels, model.cfg.input_frames],
        methods: maps.iter().map(|m| m.method).collect(),
        skipped,
        band_shares,
    };
    write_json(&cdir.join("clip.json"), &info)?;
    write_text(&cdir.join("overlay.svg"), &overlay_from_dir(&cdir)?)?;
    Ok(info)
}

/// Combined figure for one explained clip, drawn from its saved payloads only.
pub fn overlay_from_dir(cdir: &Path) -> Result<String> {
    let info: ClipExplanation = read_json(&cdir.join("clip.json"))?;
    let [rows, cols] = info.mel_shape;
    let mel_path = cdir.join("input_mel.f32");
    let mel: Vec<f64> = if mel_path.exists() {
        f32_from_le_bytes(&fs::read(&mel_path)?).into_iter().map(f64::from).collect()
    } else {
        Vec::new()
    };
    let mut loaded = Vec::new();
    for m in &info.methods {
        loaded.push(AttributionMap::load(cdir, m.name())?);
    }
    let mut panels = Vec::new();
    if mel.len() == rows * cols && !mel.is_empty() {
        panels.push(Panel {
            title: "Log-mel spectrogram".into(),
            heat: None,
        });
        for m in loaded.iter().filter(|m| m.shape.len() == 2) {
            let title = match m.method {
                Method::GradCam => "Grad-CAM",
                Method::IntegratedGradients => "Integrated Gradients",
                Method::SpectrogramShapApprox => "Spectrogram SHAP (approx.)",
                Method::Shap => "SHAP",
            };
            panels.push(Panel {
                title: title.into(),
                heat: Some(&m.values),
            });
        }
    }
    let shap = loaded.iter().find(|m| m.method == Method::Shap);
    let top: Option<(Vec<String>, Vec<f64>)> = shap.map(|m| {
        let names = m.feature_names.clone().unwrap_or_else(|| (0..m.values.len()).map(|i| format!("f{i}")).collect());
        let mut idx: Vec<usize> = (0..m.values.len()).collect();
        idx.sort_by(|&a, &b| m.values[b].abs().total_cmp(&m.values[a].abs()).then(a.cmp(&b)));
        idx.truncate(15);
        (idx.iter().map(|&i| names[i].clone()).collect(), idx.iter().map(|&i| m.values[i]).collect())
    });
    let title = format!(
        "{} (true {}, predicted {}, target {})",
        info.clip_id,
        info.label.name(),
        info.predicted.name(),
        info.target.name()
    );
    Ok(figures::overlay_svg(
        &title,
        &mel,
        rows,
        cols,
        &panels,
        top.as_ref().map(|(n, v)| (n.as_slice(), v.as_slice())),
    ))
}

fn members<'a>(clips: &'a [StoredClip], split: &SplitAssignment, p: Partition) -> Vec<&'a StoredClip> {
    clips
        .iter()
        .filter(|c| split.partition_of(&c.entry.clip_id) == Some(p))
        .collect()
}

/// First test clip of each class, in class order.
pub fn default_clips<'a>(clips: &'a [StoredClip], split: &SplitAssignment) -> Vec<&'a StoredClip> {
    let test = members(clips, split, Partition::Test);
    Class::ALL
        .iter()
        .filter_map(|&c| test.iter().find(|s| s.entry.label == c).copied())
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn global_ranking(
    model: &Model,
    clips: &[StoredClip],
    split: &SplitAssignment,
    background: &[f64],
    x: &XaiConfig,
    pool_seed: u64,
    shap_seed: u64,
) -> Result<GlobalImportance> {
    let mut pool: Vec<&StoredClip> = Vec::new();
    for p in [Partition::Test, Partition::Val, Partition::Train] {
        let mut m = members(clips, split, p);
        m.shuffle(&mut stream(pool_seed, Domain::Shap, 1, p as u64));
        pool.extend(m);
    }
    pool.truncate(x.global_samples);
    if pool.len() < 10 {
        return Err(CliError::data(format!("global importance needs at least 10 samples, have {}", pool.len())));
    }
    let phis: Vec<Vec<f64>> = pool
        .par_iter()
        .map(|c| {
            let (mel, hand) = model.inputs(c);
            let (probs, deep) = model.run(&mel, &hand)?;
            let target = Class::from_index(argmax(&probs)).unwrap();
            Ok(shap_hand_features(&model.params, &model.cfg, &deep, &hand, background, target, x.shap_permutations, shap_seed)?.values)
        })
        .collect::<Result<_>>()?;
    Ok(GlobalImportance {
        variant: model.cfg.variant,
        target: "predicted class logit".into(),
        n_samples: pool.len(),
        permutations: x.shap_permutations,
        clip_ids: pool.iter().map(|c| c.entry.clip_id.clone()).collect(),
        ranking: global_importance(&phis, hand_feature_names())?,
    })
}

/// Mean handcrafted vector over a seeded draw of training clips.
fn train_background(clips: &[StoredClip], split: &SplitAssignment, cfg: &RunConfig) -> Result<Vec<f64>> {
    let train = members(clips, split, Partition::Train);
    let hands: Vec<Vec<f64>> = train.iter().map(|c| c.features.hand.iter().map(|&v| v as f64).collect()).collect();
    let refs: Vec<&[f64]> = hands.iter().map(Vec::as_slice).collect();
    Ok(background_mean(&refs, cfg.xai.background_size, cfg.seed)?)
}

/// Global handcrafted-feature ranking with permutations drawn from `shap_seed`;
/// samples and background stay those of the run seed. Nothing is written.
pub fn global_ranking_with_seed(cfg: &RunConfig, variant: Variant, shap_seed: u64) -> Result<GlobalImportance> {
    if !variant.uses_hand() {
        return Err(CliError::data(format!("variant {variant} has no handcrafted branch")));
    }
    let ws = Workspace::new(&cfg.paths.workdir);
    let clips = read_store(&ws.store())?;
    let split = split_store(cfg, &ws, &clips)?;
    let model = Model::from_checkpoint(&load_checkpoint(&ws, variant)?);
    let background = train_background(&clips, &split, cfg)?;
    global_ranking(&model, &clips, &split, &background, &cfg.xai, cfg.seed, shap_seed)
}

pub fn cmd_explain(cfg: &RunConfig, variant: Variant, clip_ids: &[String], methods: &[Method]) -> Result<ExplainSummary> {
    let ws = Workspace::new(&cfg.paths.workdir);
    let clips = read_store(&ws.store())?;
    let split = split_store(cfg, &ws, &clips)?;
    let model = Model::from_checkpoint(&load_checkpoint(&ws, variant)?);
    let chosen: Vec<&StoredClip> = if clip_ids.is_empty() {
        default_clips(&clips, &split)
    } else {
        clip_ids
            .iter()
            .map(|id| {
                clips
                    .iter()
                    .find(|c| &c.entry.clip_id == id)
                    .ok_or_else(|| CliError::data(format!("clip '{id}' is not in the feature store")))
            })
            .collect::<Result<_>>()?
    };
    let methods = if methods.is_empty() { default_methods(&cfg.xai) } else { methods.to_vec() };
    let background = if variant.uses_hand() {
        Some(train_background(&clips, &split, cfg)?)
    } else {
        None
    };
    let dir = ws.explain_dir(variant);
    fs::create_dir_all(&dir)?;
    let infos: Vec<ClipExplanation> = chosen
        .par_iter()
        .map(|c| explain_clip(&model, c, &methods, background.as_deref(), &cfg.xai, cfg.seed, &dir))
        .collect::<Result<_>>()?;
    let with_global = methods.contains(&Method::Shap) && variant.uses_hand();
    if with_global {
        let g = global_ranking(&model, &clips, &split, background.as_deref().unwrap(), &cfg.xai, cfg.seed, cfg.seed)?;
        write_json(&dir.join("global_importance.json"), &g)?;
    }
    let summary = ExplainSummary {
        variant,
        clips: infos.iter().map(|i| i.clip_id.clone()).collect(),
        global_importance: with_global,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}
