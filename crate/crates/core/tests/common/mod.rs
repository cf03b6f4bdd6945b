#![allow(dead_code)]

use std::f64::consts::PI;

use breathnet_core::audio::{restandardize, StandardClip, CLIP_LEN, TARGET_RATE};
use breathnet_core::dsp::{RealFft, C64};

pub fn sine(freq: f64, rate: f64, n: usize, amp: f64) -> Vec<f32> {
    (0..n).map(|i| (amp * (2.0 * PI * freq * i as f64 / rate).sin()) as f32).collect()
}

pub fn tone_clip(freq: f64) -> StandardClip {
    restandardize(&sine(freq, TARGET_RATE as f64, CLIP_LEN, 0.5)).unwrap()
}

/// Frequency of the largest magnitude in a full-length DFT, refined by parabolic
/// interpolation on log magnitudes.
pub fn dominant_hz(x: &[f32], rate: f64) -> f64 {
    let n = x.len();
    let mut fft = RealFft::new(n);
    let frame: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let mut out = vec![C64::new(0.0, 0.0); fft.bins()];
    fft.forward(&frame, &mut out);
    let mags: Vec<f64> = out.iter().map(|c| c.norm()).collect();
    let k = (1..mags.len() - 1).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
    let (a, b, c) = (mags[k - 1].ln(), mags[k].ln(), mags[k + 1].ln());
    let delta = 0.5 * (a - c) / (a - 2.0 * b + c);
    (k as f64 + delta) * rate / n as f64
}
