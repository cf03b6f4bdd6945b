//! HTK-scale triangular filterbank, log-mel spectrogram and the DCT-II basis.

use std::sync::OnceLock;

use crate::audio::StandardClip;
use crate::error::Result;

use super::stft::{bin_frequencies, stft, Spectrogram};
use super::{DB_FLOOR, MEL_FMAX, MEL_FMIN, N_BINS, N_FRAMES, N_MELS};

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// `weights[band * N_BINS + bin]`, peak-one triangles between adjacent mel points.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub weights: Vec<f64>,
    pub n_bands: usize,
    pub n_bins: usize,
    /// Triangle apex frequencies.
    pub centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_bands: usize, fmin: f64, fmax: f64) -> Self {
        let (mlo, mhi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let points: Vec<f64> = (0..n_bands + 2)
            .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_bands + 1) as f64))
            .collect();
        let freqs = bin_frequencies();
        let mut weights = vec![0.0; n_bands * N_BINS];
        for b in 0..n_bands {
            let (lo, c, hi) = (points[b], points[b + 1], points[b + 2]);
            for (k, &f) in freqs.iter().enumerate() {
                let w = if f > lo && f <= c {
                    (f - lo) / (c - lo)
                } else if f > c && f < hi {
                    (hi - f) / (hi - c)
                } else {
                    0.0
                };
                weights[b * N_BINS + k] = w;
            }
        }
        MelFilterbank {
            weights,
            n_bands,
            n_bins: N_BINS,
            centers_hz: points[1..=n_bands].to_vec(),
        }
    }

    pub fn row(&self, band: usize) -> &[f64] {
        &self.weights[band * self.n_bins..(band + 1) * self.n_bins]
    }

    /// Mel-band power for one frame of bin powers.
    pub fn project(&self, power: &[f64], out: &mut [f64]) {
        for (b, o) in out.iter_mut().enumerate() {
            *o = self.row(b).iter().zip(power).map(|(w, p)| w * p).sum();
        }
    }
}

/// The shared 128-band 20 Hz – 8 kHz filterbank.
pub fn mel_filterbank() -> &'static MelFilterbank {
    static FB: OnceLock<MelFilterbank> = OnceLock::new();
    FB.get_or_init(|| MelFilterbank::new(N_MELS, MEL_FMIN, MEL_FMAX))
}

/// Orthonormal DCT-II rows `k = 0..n_coeffs` over `n` inputs.
pub fn dct_basis(n_coeffs: usize, n: usize) -> Vec<Vec<f64>> {
    (0..n_coeffs)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            (0..n)
                .map(|i| {
                    scale
                        * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64)
                            .cos()
                })
                .collect()
        })
        .collect()
}

pub fn power_to_db(p: f64) -> f64 {
    10.0 * p.max(DB_FLOOR).log10()
}

/// Log-mel energies in dB, band-major `[band * n_frames + frame]`, before z-scoring.
pub fn log_mel_db(spec: &Spectrogram) -> Vec<f64> {
    let fb = mel_filterbank();
    let t_frames = spec.n_frames;
    let mut out = vec![0.0; N_MELS * t_frames];
    let mut power = vec![0.0; spec.n_bins];
    let mut bands = vec![0.0; N_MELS];
    for t in 0..t_frames {
        for (k, p) in power.iter_mut().enumerate() {
            let m = spec.get(k, t);
            *p = m * m;
        }
        fb.project(&power, &mut bands);
        for (b, v) in bands.iter().enumerate() {
            out[b * t_frames + t] = power_to_db(*v);
        }
    }
    out
}

/// Z-scored log-mel spectrogram, band-major `values[band * n_frames + frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Vec<f32>,
    pub n_mels: usize,
    pub n_frames: usize,
    pub mel_centers_hz: Vec<f64>,
}

impl MelSpectrogram {
    pub fn get(&self, band: usize, frame: usize) -> f32 {
        self.values[band * self.n_frames + frame]
    }
}

/// Global z-score; a zero-variance input becomes all zeros.
pub fn zscore_matrix(x: &[f64]) -> Vec<f32> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 1e-24 {
        return vec![0.0; x.len()];
    }
    let inv = 1.0 / var.sqrt();
    x.iter().map(|v| ((v - mean) * inv) as f32).collect()
}

pub fn mel_spectrogram(clip: &StandardClip) -> Result<MelSpectrogram> {
    let spec = stft(clip)?;
    let db = log_mel_db(&spec);
    Ok(MelSpectrogram {
        values: zscore_matrix(&db),
        n_mels: N_MELS,
        n_frames: N_FRAMES,
        mel_centers_hz: mel_filterbank().centers_hz.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filterbank_rows_are_nonnegative_positive_and_overlapping() {
        let fb = mel_filterbank();
        assert_eq!(fb.weights.len(), 128 * 513);
        for b in 0..fb.n_bands {
            let row = fb.row(b);
            assert!(row.iter().all(|&w| w >= 0.0));
            assert!(row.iter().sum::<f64>() > 0.0, "empty band {b}");
        }
        // adjacent triangles share sampled support once bands are wider than a bin
        for b in 0..fb.n_bands - 1 {
            assert!(fb.centers_hz[b] < fb.centers_hz[b + 1]);
            if fb.centers_hz[b] > 300.0 {
                let (r0, r1) = (fb.row(b), fb.row(b + 1));
                assert!(r0.iter().zip(r1).any(|(a, c)| *a > 0.0 && *c > 0.0), "band {b}");
            }
        }
        assert!((hz_to_mel(mel_to_hz(1234.0)) - 1234.0).abs() < 1e-9);
    }

    #[test]
    fn dct_basis_is_orthonormal() {
        let d = dct_basis(20, 128);
        for i in 0..20 {
            for j in 0..20 {
                let dot: f64 = d[i].iter().zip(&d[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_matrix_zscores_to_zero() {
        assert!(zscore_matrix(&[-100.0; 16]).iter().all(|&v| v == 0.0));
    }
}
