//! Decoding, standardization and quality screening of raw recordings.
//!
//! Every recording becomes a [`StandardClip`]: 16 kHz mono, exactly 64,000
//! samples (4 s), peak-normalized and then z-scored.

pub mod qc;
pub mod resample;
pub mod wav;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use qc::{quality_check, QcConfig, QcReport, Verdict};
pub use wav::{decode_wav, encode_wav, SampleEncoding};

pub const TARGET_RATE: u32 = 16_000;
pub const CLIP_LEN: usize = 64_000;

/// Decoded multi-channel audio at its native rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    channels: Vec<Vec<f32>>,
    sample_rate: u32,
}

impl RawRecording {
    pub fn new(channels: Vec<Vec<f32>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidInput("recording has no channels".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        let n = channels[0].len();
        if let Some(bad) = channels.iter().position(|c| c.len() != n) {
            return Err(Error::InvalidInput(format!(
                "channel {bad} has {} samples, channel 0 has {n}",
                channels[bad].len()
            )));
        }
        Ok(RawRecording {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn channels(&self) -> &[Vec<f32>] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn downmix(&self) -> Vec<f32> {
        let k = self.channels.len() as f64;
        (0..self.len())
            .map(|i| (self.channels.iter().map(|c| c[i] as f64).sum::<f64>() / k) as f32)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipStage {
    PeakNormalized,
    Zscored,
}

/// Fixed-shape 16 kHz mono clip.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardClip {
    samples: Vec<f32>,
    stage: ClipStage,
}

impl StandardClip {
    pub fn new(samples: Vec<f32>, stage: ClipStage) -> Result<Self> {
        if samples.len() != CLIP_LEN {
            return Err(Error::shape(format!("{CLIP_LEN} samples"), samples.len()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("clip contains NaN or infinite samples".into()));
        }
        if stage == ClipStage::PeakNormalized && samples.iter().any(|v| v.abs() > 1.0) {
            return Err(Error::InvalidInput(
                "peak-normalized clip exceeds unit amplitude".into(),
            ));
        }
        Ok(StandardClip { samples, stage })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn stage(&self) -> ClipStage {
        self.stage
    }

    pub fn sample_rate(&self) -> u32 {
        TARGET_RATE
    }

    pub fn is_silent(&self) -> bool {
        self.samples.iter().all(|&v| v == 0.0)
    }

    /// Peak-normalized view of this clip (`x / max|x|`); identity for that stage.
    pub fn to_peak_normalized(&self) -> StandardClip {
        match self.stage {
            ClipStage::PeakNormalized => self.clone(),
            ClipStage::Zscored => StandardClip {
                samples: peak_normalize(&self.samples),
                stage: ClipStage::PeakNormalized,
            },
        }
    }
}

/// Center-cut to `len` when longer, append trailing zeros when shorter.
pub fn fit_length(samples: &[f32], len: usize) -> Vec<f32> {
    if samples.len() >= len {
        let start = (samples.len() - len) / 2;
        samples[start..start + len].to_vec()
    } else {
        let mut out = samples.to_vec();
        out.resize(len, 0.0);
        out
    }
}

pub fn peak_normalize(samples: &[f32]) -> Vec<f32> {
    let peak = samples.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return samples.to_vec();
    }
    let inv = 1.0 / peak as f64;
    samples
        .iter()
        .map(|&v| ((v as f64 * inv) as f32).clamp(-1.0, 1.0))
        .collect()
}

/// Zero-mean, unit-variance rescaling. A zero-variance input maps to all zeros.
pub fn zscore(samples: &[f32]) -> Vec<f32> {
    let n = samples.len() as f64;
    let mean = samples.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = samples
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    if var <= 0.0 || !var.is_finite() {
        return vec![0.0; samples.len()];
    }
    let inv = 1.0 / var.sqrt();
    samples
        .iter()
        .map(|&v| ((v as f64 - mean) * inv) as f32)
        .collect()
}

/// Both standardization stages for one recording.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub peak: StandardClip,
    pub zscored: StandardClip,
}

/// Downmix, resample to 16 kHz, fit to 64,000 samples, peak-normalize, z-score.
pub fn standardize_stages(rec: &RawRecording) -> Result<Standardized> {
    if rec.is_empty() {
        return Err(Error::InvalidInput("zero-length recording".into()));
    }
    let mono = rec.downmix();
    let resampled = resample::resample(&mono, rec.sample_rate() as f64, TARGET_RATE as f64);
    let fitted = fit_length(&resampled, CLIP_LEN);
    let peak = peak_normalize(&fitted);
    let z = zscore(&peak);
    Ok(Standardized {
        peak: StandardClip::new(peak, ClipStage::PeakNormalized)?,
        zscored: StandardClip::new(z, ClipStage::Zscored)?,
    })
}

pub fn standardize(rec: &RawRecording) -> Result<StandardClip> {
    Ok(standardize_stages(rec)?.zscored)
}

/// Re-standardize a clip that is already 16 kHz and 64,000 samples long.
pub fn restandardize(samples: &[f32]) -> Result<StandardClip> {
    let fitted = fit_length(samples, CLIP_LEN);
    StandardClip::new(zscore(&peak_normalize(&fitted)), ClipStage::Zscored)
}
