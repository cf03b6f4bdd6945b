//! Phase-vocoder time stretching (Hann 1024 / hop 256, centered frames).

use std::f64::consts::PI;

use crate::dsp::{hann, RealFft, C64};

pub const VOC_FFT: usize = 1024;
pub const VOC_HOP: usize = 256;

fn centered_stft(x: &[f32]) -> Vec<Vec<C64>> {
    let pad = VOC_FFT / 2;
    let mut padded = vec![0.0f64; x.len() + 2 * pad];
    for (p, &v) in padded[pad..].iter_mut().zip(x) {
        *p = v as f64;
    }
    let n_frames = 1 + (padded.len() - VOC_FFT) / VOC_HOP;
    let window = hann(VOC_FFT);
    let mut fft = RealFft::new(VOC_FFT);
    let mut frame = vec![0.0; VOC_FFT];
    (0..n_frames)
        .map(|t| {
            let s = t * VOC_HOP;
            for i in 0..VOC_FFT {
                frame[i] = padded[s + i] * window[i];
            }
            let mut spec = vec![C64::new(0.0, 0.0); fft.bins()];
            fft.forward(&frame, &mut spec);
            spec
        })
        .collect()
}

fn istft(frames: &[Vec<C64>], out_len: usize) -> Vec<f32> {
    let pad = VOC_FFT / 2;
    let total = (frames.len().saturating_sub(1)) * VOC_HOP + VOC_FFT;
    let mut acc = vec![0.0f64; total.max(out_len + pad)];
    let mut wsum = vec![0.0f64; acc.len()];
    let window = hann(VOC_FFT);
    let mut fft = RealFft::new(VOC_FFT);
    let mut buf = vec![0.0; VOC_FFT];
    for (t, spec) in frames.iter().enumerate() {
        fft.inverse(spec, &mut buf);
        let s = t * VOC_HOP;
        for i in 0..VOC_FFT {
            acc[s + i] += buf[i] * window[i];
            wsum[s + i] += window[i] * window[i];
        }
    }
    (0..out_len)
        .map(|n| {
            let i = n + pad;
            if wsum[i] > 1e-8 {
                (acc[i] / wsum[i]) as f32
            } else {
                0.0
            }
        })
        .collect()
}

fn wrap_phase(p: f64) -> f64 {
    p - 2.0 * PI * ((p + PI) / (2.0 * PI)).floor()
}

/// Stretch duration by `1/rate` while preserving pitch. Output has `round(len/rate)` samples.
pub fn phase_vocoder(x: &[f32], rate: f64) -> Vec<f32> {
    assert!(rate > 0.0);
    let out_len = (x.len() as f64 / rate).round() as usize;
    let stft = centered_stft(x);
    let n_frames = stft.len();
    let bins = VOC_FFT / 2 + 1;
    let advance: Vec<f64> = (0..bins)
        .map(|k| 2.0 * PI * VOC_HOP as f64 * k as f64 / VOC_FFT as f64)
        .collect();
    let zero = vec![C64::new(0.0, 0.0); bins];
    let mut phase: Vec<f64> = stft[0].iter().map(|c| c.arg()).collect();
    let mut out = Vec::new();
    let mut step = 0.0f64;
    while step < n_frames as f64 {
        let i = step.floor() as usize;
        let alpha = step - i as f64;
        let c0 = &stft[i];
        let c1 = stft.get(i + 1).unwrap_or(&zero);
        let mut frame = Vec::with_capacity(bins);
        for k in 0..bins {
            let mag = (1.0 - alpha) * c0[k].norm() + alpha * c1[k].norm();
            frame.push(C64::from_polar(mag, phase[k]));
            let dphi = wrap_phase(c1[k].arg() - c0[k].arg() - advance[k]);
            phase[k] += advance[k] + dphi;
        }
        out.push(frame);
        step += rate;
    }
    istft(&out, out_len)
}
