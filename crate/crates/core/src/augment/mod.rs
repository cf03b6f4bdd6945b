//! Training-time waveform perturbations: time stretch, pitch shift, additive noise.
//!
//! Every operation returns a z-scored [`StandardClip`]. Randomness comes only
//! from the rng passed in, so a `(seed, epoch, sample)` substream reproduces
//! the exact perturbation.

pub mod vocoder;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::resample::resample;
use crate::audio::{fit_length, restandardize, StandardClip, CLIP_LEN, TARGET_RATE};
use crate::error::{Error, Result};
use crate::rng::standard_normal;

pub const STRETCH_LIMITS: (f64, f64) = (0.5, 2.0);
pub const PITCH_LIMIT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentPolicy {
    pub p_stretch: f64,
    pub p_pitch: f64,
    pub p_noise: f64,
    pub stretch_range: [f64; 2],
    pub pitch_range_semitones: [f64; 2],
    pub snr_range_db: [f64; 2],
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            p_stretch: 0.5,
            p_pitch: 0.5,
            p_noise: 0.5,
            stretch_range: [0.9, 1.1],
            pitch_range_semitones: [-2.0, 2.0],
            snr_range_db: [15.0, 30.0],
        }
    }
}

impl AugmentPolicy {
    pub fn disabled() -> Self {
        AugmentPolicy {
            p_stretch: 0.0,
            p_pitch: 0.0,
            p_noise: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_stretch", self.p_stretch),
            ("p_pitch", self.p_pitch),
            ("p_noise", self.p_noise),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::OutOfRange {
                    name,
                    value: p,
                    min: 0.0,
                    max: 1.0,
                });
            }
        }
        let ordered = |r: [f64; 2]| r[0] <= r[1] && r.iter().all(|v| v.is_finite());
        if !ordered(self.stretch_range)
            || !ordered(self.pitch_range_semitones)
            || !ordered(self.snr_range_db)
        {
            return Err(Error::InvalidInput("augmentation ranges must be finite [lo, hi]".into()));
        }
        if self.stretch_range[0] < STRETCH_LIMITS.0 || self.stretch_range[1] > STRETCH_LIMITS.1 {
            return Err(Error::InvalidInput(format!(
                "stretch range {:?} outside [{}, {}]",
                self.stretch_range, STRETCH_LIMITS.0, STRETCH_LIMITS.1
            )));
        }
        if self.pitch_range_semitones.iter().any(|s| s.abs() > PITCH_LIMIT) {
            return Err(Error::InvalidInput(format!(
                "pitch range {:?} exceeds ±{PITCH_LIMIT} semitones",
                self.pitch_range_semitones
            )));
        }
        Ok(())
    }
}

/// Concrete perturbations chosen for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentPlan {
    pub stretch_rate: Option<f64>,
    pub pitch_semitones: Option<f64>,
    pub noise_snr_db: Option<f64>,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

impl AugmentPlan {
    /// Independent coin flip per perturbation; parameters uniform over the policy ranges.
    pub fn draw<R: Rng + ?Sized>(policy: &AugmentPolicy, rng: &mut R) -> AugmentPlan {
        let mut plan = AugmentPlan::default();
        if rng.random::<f64>() < policy.p_stretch {
            plan.stretch_rate = Some(uniform(rng, policy.stretch_range));
        }
        if rng.random::<f64>() < policy.p_pitch {
            plan.pitch_semitones = Some(uniform(rng, policy.pitch_range_semitones));
        }
        if rng.random::<f64>() < policy.p_noise {
            plan.noise_snr_db = Some(uniform(rng, policy.snr_range_db));
        }
        plan
    }

    pub fn is_identity(&self) -> bool {
        self.stretch_rate.is_none() && self.pitch_semitones.is_none() && self.noise_snr_db.is_none()
    }
}

/// Pitch-preserving stretch; the result is re-fit to 64,000 samples (center cut / trailing pad).
pub fn time_stretch(clip: &StandardClip, rate: f64) -> Result<StandardClip> {
    if !(STRETCH_LIMITS.0..=STRETCH_LIMITS.1).contains(&rate) {
        return Err(Error::OutOfRange {
            name: "stretch rate",
            value: rate,
            min: STRETCH_LIMITS.0,
            max: STRETCH_LIMITS.1,
        });
    }
    let stretched = vocoder::phase_vocoder(clip.samples(), rate);
    restandardize(&fit_length(&stretched, CLIP_LEN))
}

/// Shift every frequency by `2^(semitones/12)` keeping the duration.
pub fn pitch_shift(clip: &StandardClip, semitones: f64) -> Result<StandardClip> {
    if !(semitones.abs() <= PITCH_LIMIT) {
        return Err(Error::OutOfRange {
            name: "pitch shift (semitones)",
            value: semitones,
            min: -PITCH_LIMIT,
            max: PITCH_LIMIT,
        });
    }
    let rate = 2f64.powf(-semitones / 12.0);
    let stretched = vocoder::phase_vocoder(clip.samples(), rate);
    let sr = TARGET_RATE as f64;
    let shifted = resample(&stretched, sr / rate, sr);
    restandardize(&fit_length(&shifted, CLIP_LEN))
}

/// Gaussian noise whose empirical power is exactly `P_signal · 10^(-snr/10)`.
pub fn noise_for_snr<R: Rng + ?Sized>(signal: &[f32], snr_db: f64, rng: &mut R) -> Result<Vec<f32>> {
    let n = signal.len() as f64;
    let p_signal = signal.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / n;
    if p_signal <= 0.0 {
        return Err(Error::InvalidInput("SNR is undefined for an all-zero clip".into()));
    }
    let raw: Vec<f64> = (0..signal.len()).map(|_| standard_normal(rng)).collect();
    let p_raw = raw.iter().map(|v| v * v).sum::<f64>() / n;
    let scale = (p_signal * 10f64.powf(-snr_db / 10.0) / p_raw).sqrt();
    Ok(raw.into_iter().map(|v| (v * scale) as f32).collect())
}

pub fn add_noise<R: Rng + ?Sized>(clip: &StandardClip, snr_db: f64, rng: &mut R) -> Result<StandardClip> {
    if !snr_db.is_finite() {
        return Err(Error::NonFinite(format!("snr_db = {snr_db}")));
    }
    let noise = noise_for_snr(clip.samples(), snr_db, rng)?;
    let mixed: Vec<f32> = clip
        .samples()
        .iter()
        .zip(&noise)
        .map(|(s, n)| s + n)
        .collect();
    restandardize(&mixed)
}

pub fn apply_plan<R: Rng + ?Sized>(
    clip: &StandardClip,
    plan: &AugmentPlan,
    rng: &mut R,
) -> Result<StandardClip> {
    let mut out = clip.clone();
    if let Some(rate) = plan.stretch_rate {
        out = time_stretch(&out, rate)?;
    }
    if let Some(s) = plan.pitch_semitones {
        out = pitch_shift(&out, s)?;
    }
    if let Some(snr) = plan.noise_snr_db {
        out = add_noise(&out, snr, rng)?;
    }
    Ok(out)
}

/// Draw and apply a perturbation plan. An empty plan returns the input unchanged.
pub fn augment<R: Rng + ?Sized>(
    clip: &StandardClip,
    policy: &AugmentPolicy,
    rng: &mut R,
) -> Result<StandardClip> {
    policy.validate()?;
    let plan = AugmentPlan::draw(policy, rng);
    apply_plan(clip, &plan, rng)
}
