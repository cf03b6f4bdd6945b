use crate::audio::{StandardClip, TARGET_RATE};
use crate::dsp::{hamming, RealFft, C64};
use crate::error::Result;

use super::{HOP, N_BINS, N_FFT, N_FRAMES};

/// Magnitude spectrogram, bin-major: `magnitudes[bin * n_frames + frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub magnitudes: Vec<f64>,
    pub n_bins: usize,
    pub n_frames: usize,
    pub bin_hz: Vec<f64>,
    pub frame_times: Vec<f64>,
}

impl Spectrogram {
    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.magnitudes[bin * self.n_frames + frame]
    }

    /// Magnitudes of one frame across all bins.
    pub fn frame(&self, frame: usize) -> Vec<f64> {
        (0..self.n_bins).map(|b| self.get(b, frame)).collect()
    }
}

pub fn bin_frequencies() -> Vec<f64> {
    (0..N_BINS)
        .map(|k| k as f64 * TARGET_RATE as f64 / N_FFT as f64)
        .collect()
}

/// Hamming-windowed 1024/256 STFT of raw samples, no center padding.
pub fn stft_samples(samples: &[f32]) -> Spectrogram {
    let n_frames = if samples.len() >= N_FFT {
        (samples.len() - N_FFT) / HOP + 1
    } else {
        0
    };
    let window = hamming(N_FFT);
    let mut fft = RealFft::new(N_FFT);
    let mut frame = vec![0.0; N_FFT];
    let mut spec = vec![C64::new(0.0, 0.0); N_BINS];
    let mut mags = vec![0.0; N_BINS * n_frames];
    for t in 0..n_frames {
        let start = t * HOP;
        for (i, f) in frame.iter_mut().enumerate() {
            *f = samples[start + i] as f64 * window[i];
        }
        fft.forward(&frame, &mut spec);
        for (k, c) in spec.iter().enumerate() {
            mags[k * n_frames + t] = c.norm();
        }
    }
    Spectrogram {
        magnitudes: mags,
        n_bins: N_BINS,
        n_frames,
        bin_hz: bin_frequencies(),
        frame_times: (0..n_frames)
            .map(|t| (t * HOP) as f64 / TARGET_RATE as f64)
            .collect(),
    }
}

pub fn stft(clip: &StandardClip) -> Result<Spectrogram> {
    let s = stft_samples(clip.samples());
    debug_assert_eq!(s.n_frames, N_FRAMES);
    Ok(s)
}
