use std::path::{Path, PathBuf};

use breathnet_core::audio::QcConfig;
use breathnet_core::augment::AugmentPolicy;
use breathnet_core::model::ModelConfig;
use breathnet_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub manifest: PathBuf,
    pub workdir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            manifest: PathBuf::from("manifest.csv"),
            workdir: PathBuf::from("work"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// train / val / test fractions
    pub ratios: [f64; 3],
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratios: [0.70, 0.15, 0.15],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct XaiConfig {
    pub ig_steps: usize,
    pub shap_permutations: usize,
    pub background_size: usize,
    /// Samples drawn for the global SHAP ranking.
    pub global_samples: usize,
    /// Also emit the multi-baseline spectrogram approximation.
    pub spectrogram_approx: bool,
    pub approx_baselines: usize,
    pub approx_sigma: f64,
    pub approx_steps: usize,
}

impl Default for XaiConfig {
    fn default() -> Self {
        XaiConfig {
            ig_steps: 64,
            shap_permutations: 200,
            background_size: 50,
            global_samples: 20,
            spectrogram_approx: false,
            approx_baselines: 8,
            approx_sigma: 0.1,
            approx_steps: 32,
        }
    }
}

/// Everything a command needs. Unknown keys are rejected at every level.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub preprocessing: QcConfig,
    pub split: SplitConfig,
    pub augmentation: AugmentPolicy,
    pub model: ModelConfig,
    /// `seed` and `augmentation` here are overridden by the top-level values.
    pub training: TrainConfig,
    pub xai: XaiConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative paths in the file are taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.paths.manifest, &mut cfg.paths.workdir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |e: breathnet_core::Error| CliError::usage(format!("config: {e}"));
        self.model.validate().map_err(usage)?;
        self.train_config().validate().map_err(usage)?;
        let r = self.split.ratios;
        if r.iter().any(|&v| !(v > 0.0)) || ((r[0] + r[1] + r[2]) - 1.0).abs() > 1e-9 {
            return Err(CliError::usage("config: split.ratios must be positive and sum to 1"));
        }
        let x = &self.xai;
        if x.ig_steps < 8 || x.shap_permutations < 100 || x.background_size == 0 || x.global_samples < 10 {
            return Err(CliError::usage(
                "config: xai needs ig_steps >= 8, shap_permutations >= 100, background_size >= 1, global_samples >= 10",
            ));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            augmentation: self.augmentation.clone(),
            ..self.training.clone()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
