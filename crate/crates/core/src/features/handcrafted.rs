//! Frame-level descriptors summarized by their mean and standard deviation.
//!
//! Layout (70 entries): MFCC means (20), MFCC stds (20), ZCR mean/std,
//! centroid mean/std, bandwidth mean/std, chroma means (12), chroma stds (12).
//! All descriptors use the STFT framing (1024/256, no center padding) on the
//! peak-normalized waveform.

use std::sync::OnceLock;

use crate::audio::StandardClip;
use crate::error::{Error, Result};
use crate::util::{mean, std_dev};

use super::mel::{dct_basis, log_mel_db};
use super::stft::stft_samples;
use super::{HAND_DIM, HOP, N_CHROMA, N_FFT, N_MELS, N_MFCC};

const CHROMA_FMIN: f64 = 32.0;

#[derive(Debug, Clone, PartialEq)]
pub struct HandcraftedVector {
    pub values: Vec<f32>,
}

impl HandcraftedVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.len() != HAND_DIM {
            return Err(Error::shape(HAND_DIM, values.len()));
        }
        Ok(HandcraftedVector { values })
    }
}

fn dct() -> &'static [Vec<f64>] {
    static DCT: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    DCT.get_or_init(|| dct_basis(N_MFCC, N_MELS))
}

/// Fraction of adjacent sample pairs whose sign differs (zero counts as positive).
pub fn zero_crossing_rate(frame: &[f32]) -> f64 {
    if frame.len() < 2 {
        return 0.0;
    }
    let crossings = frame
        .windows(2)
        .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
        .count();
    crossings as f64 / (frame.len() - 1) as f64
}

/// Magnitude-weighted first and second spectral moments; `(0, 0)` for a silent frame.
pub fn centroid_bandwidth(mags: &[f64], freqs: &[f64]) -> (f64, f64) {
    let total: f64 = mags.iter().sum();
    if total <= 0.0 {
        return (0.0, 0.0);
    }
    let c = mags.iter().zip(freqs).map(|(m, f)| m * f).sum::<f64>() / total;
    let var = mags
        .iter()
        .zip(freqs)
        .map(|(m, f)| m * (f - c).powi(2))
        .sum::<f64>()
        / total;
    (c, var.sqrt())
}

pub fn pitch_class(freq: f64) -> usize {
    (12.0 * (freq / 440.0).log2()).round().rem_euclid(12.0) as usize
}

/// Per-frame L2-normalized pitch-class energy profile.
pub fn chroma_frame(mags: &[f64], freqs: &[f64]) -> [f64; N_CHROMA] {
    let mut out = [0.0; N_CHROMA];
    for (m, &f) in mags.iter().zip(freqs) {
        if f >= CHROMA_FMIN {
            out[pitch_class(f)] += m * m;
        }
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|v| *v /= norm);
    }
    out
}

pub fn handcrafted_vector(clip: &StandardClip) -> Result<HandcraftedVector> {
    let peak = clip.to_peak_normalized();
    let samples = peak.samples();
    let spec = stft_samples(samples);
    let t_frames = spec.n_frames;
    let db = log_mel_db(&spec);
    let basis = dct();

    let mut mfcc = vec![Vec::with_capacity(t_frames); N_MFCC];
    let mut zcr = Vec::with_capacity(t_frames);
    let mut centroid = Vec::with_capacity(t_frames);
    let mut bandwidth = Vec::with_capacity(t_frames);
    let mut chroma = vec![Vec::with_capacity(t_frames); N_CHROMA];
    let mut col = vec![0.0; N_MELS];
    for t in 0..t_frames {
        for (b, c) in col.iter_mut().enumerate() {
            *c = db[b * t_frames + t];
        }
        for (k, row) in basis.iter().enumerate() {
            mfcc[k].push(row.iter().zip(&col).map(|(a, b)| a * b).sum::<f64>());
        }
        zcr.push(zero_crossing_rate(&samples[t * HOP..t * HOP + N_FFT]));
        let mags = spec.frame(t);
        let (c, bw) = centroid_bandwidth(&mags, &spec.bin_hz);
        centroid.push(c);
        bandwidth.push(bw);
        for (p, v) in chroma_frame(&mags, &spec.bin_hz).iter().enumerate() {
            chroma[p].push(*v);
        }
    }

    let mut v = Vec::with_capacity(HAND_DIM);
    v.extend(mfcc.iter().map(|c| mean(c)));
    v.extend(mfcc.iter().map(|c| std_dev(c)));
    for d in [&zcr, &centroid, &bandwidth] {
        v.push(mean(d));
        v.push(std_dev(d));
    }
    v.extend(chroma.iter().map(|c| mean(c)));
    v.extend(chroma.iter().map(|c| std_dev(c)));
    HandcraftedVector::new(v.into_iter().map(|x| x as f32).collect())
}
