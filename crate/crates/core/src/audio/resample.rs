//! Band-limited resampling with a Kaiser-windowed sinc kernel.
//!
//! Each output sample is a 64-tap dot product against the input. The kernel
//! is tabulated at `PHASES` fractional offsets and linearly interpolated
//! between neighbouring phases, so arbitrary (including non-rational) rate
//! ratios share one code path.

use std::f64::consts::PI;

pub const TAPS: usize = 64;
const HALF: f64 = (TAPS / 2) as f64;
const PHASES: usize = 512;
const KAISER_BETA: f64 = 8.6;
const ROLLOFF: f64 = 0.95;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser(t: f64) -> f64 {
    let r = t / HALF;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / bessel_i0(KAISER_BETA)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Kernel table for one rate ratio: `PHASES + 1` rows of `TAPS` weights.
struct KernelTable {
    rows: Vec<[f64; TAPS]>,
}

impl KernelTable {
    fn new(cutoff: f64) -> Self {
        let mut rows = Vec::with_capacity(PHASES + 1);
        for p in 0..=PHASES {
            let frac = p as f64 / PHASES as f64;
            let mut row = [0.0; TAPS];
            for (j, w) in row.iter_mut().enumerate() {
                // tap j sits at input index floor(t) - (HALF - 1) + j
                let dt = frac + (HALF - 1.0) - j as f64;
                *w = cutoff * sinc(cutoff * dt) * kaiser(dt);
            }
            // unity DC gain per phase
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|w| *w /= s);
            rows.push(row);
        }
        KernelTable { rows }
    }

    fn weights(&self, frac: f64, out: &mut [f64; TAPS]) {
        let pos = frac * PHASES as f64;
        let p = (pos.floor() as usize).min(PHASES - 1);
        let a = pos - p as f64;
        let (r0, r1) = (&self.rows[p], &self.rows[p + 1]);
        for j in 0..TAPS {
            out[j] = r0[j] * (1.0 - a) + r1[j] * a;
        }
    }
}

/// Resample `input` from `from_hz` to `to_hz`. Output length is `round(len * to/from)`.
pub fn resample(input: &[f32], from_hz: f64, to_hz: f64) -> Vec<f32> {
    assert!(from_hz > 0.0 && to_hz > 0.0, "sample rates must be positive");
    if input.is_empty() {
        return Vec::new();
    }
    if from_hz == to_hz {
        return input.to_vec();
    }
    let ratio = to_hz / from_hz;
    let cutoff = ratio.min(1.0) * ROLLOFF;
    let table = KernelTable::new(cutoff);
    let out_len = ((input.len() as f64) * ratio).round().max(1.0) as usize;
    let n_in = input.len() as isize;
    let mut weights = [0.0; TAPS];
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let t = n as f64 / ratio;
        let base = t.floor();
        table.weights(t - base, &mut weights);
        let first = base as isize - (HALF as isize - 1);
        let mut acc = 0.0;
        for (j, w) in weights.iter().enumerate() {
            let k = first + j as isize;
            if k >= 0 && k < n_in {
                acc += w * input[k as usize] as f64;
            }
        }
        out.push(acc as f32);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: f64, n: usize) -> Vec<f32> {
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / rate).sin() as f32)
            .collect()
    }

    #[test]
    fn identity_rate_is_copy() {
        let x = tone(440.0, 16_000.0, 1000);
        assert_eq!(resample(&x, 16_000.0, 16_000.0), x);
    }

    #[test]
    fn upsampled_tone_matches_analytic_samples() {
        let x = tone(1000.0, 8_000.0, 8_000);
        let y = resample(&x, 8_000.0, 16_000.0);
        assert_eq!(y.len(), 16_000);
        let expected = tone(1000.0, 16_000.0, 16_000);
        // away from the edges the band-limited interpolation is near exact
        let err: f64 = y[200..15_800]
            .iter()
            .zip(&expected[200..15_800])
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum::<f64>()
            / 15_600.0;
        assert!(err.sqrt() < 1e-3, "rms err {}", err.sqrt());
    }

    #[test]
    fn downsampling_rejects_content_above_new_nyquist() {
        // 7 kHz at 44.1 kHz must vanish when going to 8 kHz (Nyquist 4 kHz)
        let x = tone(7_000.0, 44_100.0, 44_100);
        let y = resample(&x, 44_100.0, 8_000.0);
        let rms = (y[100..y.len() - 100].iter().map(|v| (v * v) as f64).sum::<f64>()
            / (y.len() - 200) as f64)
            .sqrt();
        assert!(rms < 1e-3, "alias rms {rms}");
    }

    #[test]
    fn dc_gain_is_unity() {
        let x = vec![0.25f32; 4000];
        let y = resample(&x, 22_050.0, 16_000.0);
        for v in &y[100..y.len() - 100] {
            assert!((v - 0.25).abs() < 1e-6);
        }
    }
}
