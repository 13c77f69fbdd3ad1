//! Linear convolution helpers shared by the kernel tables and the encoder.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Below this many multiply-adds the direct sum is cheaper than three FFTs.
const DIRECT_LIMIT: usize = 1 << 16;

/// Full linear convolution `a * b`, length `a.len() + b.len() - 1`.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    if a.len().saturating_mul(b.len()) <= DIRECT_LIMIT {
        convolve_direct(a, b)
    } else {
        convolve_fft(a, b)
    }
}

pub fn convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &y) in out[i..].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    out
}

pub fn convolve_fft(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut fa = padded(a, n);
    let mut fb = padded(b, n);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / n as f64;
    fa[..out_len].iter().map(|c| c.re * scale).collect()
}

/// Pre-transformed operands for many convolutions at one common FFT size.
pub(crate) struct SpectrumCache {
    n: usize,
    fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl SpectrumCache {
    pub(crate) fn new(min_len: usize) -> Self {
        let n = min_len.max(1).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub(crate) fn forward(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf = padded(x, self.n);
        self.fwd.process(&mut buf);
        buf
    }

    /// Inverse transform of `a · b`, keeping the first `len` real samples.
    pub(crate) fn product_inverse(&self, a: &[Complex64], b: &[Complex64], len: usize) -> Vec<f64> {
        let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
        self.inv.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf[..len].iter().map(|c| c.re * scale).collect()
    }
}

fn padded(x: &[f64], n: usize) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (b, &v) in buf.iter_mut().zip(x) {
        b.re = v;
    }
    buf
}
