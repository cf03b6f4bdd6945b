//! FFT plumbing and window functions shared by features and augmentation.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub type C64 = Complex<f64>;

/// Periodic Hamming window, `0.54 - 0.46 cos(2πn/N)`.
pub fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Real-input FFT of fixed size returning the one-sided spectrum (`n/2 + 1` bins).
pub struct RealFft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buf: Vec<C64>,
    scratch: Vec<C64>,
}

impl RealFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        RealFft {
            n,
            forward,
            inverse,
            buf: vec![C64::new(0.0, 0.0); n],
            scratch: vec![C64::new(0.0, 0.0); scratch_len],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    /// `out[k] = Σ_n x[n] e^{-j2πkn/N}` for `k = 0..=N/2`.
    pub fn forward(&mut self, frame: &[f64], out: &mut [C64]) {
        debug_assert_eq!(frame.len(), self.n);
        for (b, &x) in self.buf.iter_mut().zip(frame) {
            *b = C64::new(x, 0.0);
        }
        self.forward
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        out[..self.bins()].copy_from_slice(&self.buf[..self.bins()]);
    }

    /// Inverse of [`forward`](Self::forward), including the `1/N` factor.
    pub fn inverse(&mut self, spectrum: &[C64], out: &mut [f64]) {
        let n = self.n;
        let half = self.bins();
        self.buf[..half].copy_from_slice(&spectrum[..half]);
        for k in half..n {
            self.buf[k] = spectrum[n - k].conj();
        }
        self.inverse
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        let scale = 1.0 / n as f64;
        for (o, b) in out.iter_mut().zip(&self.buf) {
            *o = b.re * scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_inverse_round_trip() {
        let mut fft = RealFft::new(64);
        let x: Vec<f64> = (0..64).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let mut spec = vec![C64::new(0.0, 0.0); fft.bins()];
        fft.forward(&x, &mut spec);
        let mut y = vec![0.0; 64];
        fft.inverse(&spec, &mut y);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn hamming_endpoints() {
        let w = hamming(8);
        assert!((w[0] - 0.08).abs() < 1e-12);
        assert!((w[4] - 1.0).abs() < 1e-12);
    }
}
