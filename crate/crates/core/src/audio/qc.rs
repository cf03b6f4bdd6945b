//! Clip quality screening: clipping fraction and a frame-energy SNR estimate.

use serde::{Deserialize, Serialize};

use super::{StandardClip, TARGET_RATE};

/// 25 ms analysis frames at 16 kHz.
pub const QC_FRAME: usize = (TARGET_RATE as usize) / 40;
pub const CLIP_LEVEL: f32 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QcConfig {
    /// Maximum tolerated fraction of samples at the rail.
    pub threshold_clip: f64,
    /// Minimum tolerated SNR estimate in dB.
    pub threshold_snr_db: f64,
}

impl Default for QcConfig {
    fn default() -> Self {
        QcConfig {
            threshold_clip: 0.01,
            threshold_snr_db: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub clipping_fraction: f64,
    /// `+inf` when the noise floor is exactly zero, `-inf` for a silent clip.
    #[serde(with = "crate::util::extended_f64")]
    pub snr_estimate_db: f64,
    pub verdict: Verdict,
    pub reason: String,
}

fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    // linear interpolation between closest ranks
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// SNR in dB: 90th-percentile over median of 25 ms frame energies.
pub fn estimate_snr_db(samples: &[f32]) -> f64 {
    let mut energies: Vec<f64> = samples
        .chunks(QC_FRAME)
        .filter(|f| f.len() == QC_FRAME)
        .map(|f| f.iter().map(|&v| (v as f64).powi(2)).sum())
        .collect();
    if energies.is_empty() {
        return f64::NEG_INFINITY;
    }
    energies.sort_by(|a, b| a.total_cmp(b));
    let noise = percentile_sorted(&energies, 0.5);
    let signal = percentile_sorted(&energies, 0.9);
    if signal <= 0.0 {
        f64::NEG_INFINITY
    } else if noise <= 0.0 {
        f64::INFINITY
    } else {
        10.0 * (signal / noise).log10()
    }
}

pub fn clipping_fraction(peak_normalized: &[f32]) -> f64 {
    let n = peak_normalized.iter().filter(|v| v.abs() >= CLIP_LEVEL).count();
    n as f64 / peak_normalized.len().max(1) as f64
}

/// Screen a clip. Z-scored clips are rescaled to unit peak before measuring.
pub fn quality_check(clip: &StandardClip, cfg: &QcConfig) -> QcReport {
    let peak = clip.to_peak_normalized();
    let samples = peak.samples();
    let clipping = clipping_fraction(samples);
    let snr = estimate_snr_db(samples);
    let mut reasons = Vec::new();
    if clipping > cfg.threshold_clip {
        reasons.push(format!(
            "clipping fraction {clipping:.4} exceeds {}",
            cfg.threshold_clip
        ));
    }
    if clip.is_silent() {
        reasons.push("silent clip".to_string());
    } else if snr < cfg.threshold_snr_db {
        reasons.push(format!(
            "snr estimate {snr:.2} dB below {} dB",
            cfg.threshold_snr_db
        ));
    }
    let verdict = if reasons.is_empty() {
        Verdict::Accept
    } else {
        Verdict::Reject
    };
    QcReport {
        clipping_fraction: clipping,
        snr_estimate_db: snr,
        verdict,
        reason: reasons.join("; "),
    }
}
