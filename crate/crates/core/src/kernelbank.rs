//! Kernel ensembles: gammatone synthesis, normalization, and the pairwise
//! cross-correlation tables every Gram entry is read from.
//!
//! All inner products use the discrete metric `<f, g> = Σ f[u] g[u] / fs`, so
//! a kernel is unit-norm when `Σ s[u]² / fs = 1` and values approximate the
//! continuous-time integrals.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fftconv::SpectrumCache;

/// Default gammatone order.
pub const DEFAULT_ORDER: u32 = 4;
/// Envelope level (relative to its peak) at which gammatone tails are cut.
pub const DEFAULT_TRUNC_REL: f64 = 1e-4;
/// Lowest center frequency of the default ERB layout.
pub const DEFAULT_LOW_HZ: f64 = 50.0;
/// Highest center frequency of the default ERB layout, as a fraction of fs.
pub const DEFAULT_HIGH_FRACTION: f64 = 0.45;
/// Bandwidth multiplier applied to the ERB for `b=auto`.
pub const ERB_BANDWIDTH_SCALE: f64 = 1.019;

const MAX_KERNELS: usize = 65535;

/// Equivalent rectangular bandwidth (Glasberg & Moore) in Hz.
pub fn erb(f_hz: f64) -> f64 {
    24.7 * (4.37 * f_hz / 1000.0 + 1.0)
}

fn erb_rate(f_hz: f64) -> f64 {
    21.4 * (4.37 * f_hz / 1000.0 + 1.0).log10()
}

fn erb_rate_inverse(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) * 1000.0 / 4.37
}

/// `count` center frequencies uniformly spaced on the ERB-rate scale over `[lo, hi]`.
pub fn erb_space(count: usize, lo_hz: f64, hi_hz: f64) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo_hz],
        _ => {
            let (a, b) = (erb_rate(lo_hz), erb_rate(hi_hz));
            (0..count)
                .map(|i| erb_rate_inverse(a + (b - a) * i as f64 / (count - 1) as f64))
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// `1.019 · ERB(f_center)`
    Auto,
    Hz(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammatoneParams {
    pub f_center: f64,
    pub order: u32,
    pub bandwidth: Bandwidth,
    pub phase: f64,
}

impl GammatoneParams {
    pub fn new(f_center: f64) -> Self {
        Self {
            f_center,
            order: DEFAULT_ORDER,
            bandwidth: Bandwidth::Auto,
            phase: 0.0,
        }
    }

    pub fn bandwidth_hz(&self) -> f64 {
        match self.bandwidth {
            Bandwidth::Auto => ERB_BANDWIDTH_SCALE * erb(self.f_center),
            Bandwidth::Hz(b) => b,
        }
    }
}

impl fmt::Display for GammatoneParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "gammatone f={} n={} b=", self.f_center, self.order)?;
        match self.bandwidth {
            Bandwidth::Auto => write!(f, "auto")?,
            Bandwidth::Hz(b) => write!(f, "{b}")?,
        }
        write!(f, " phase={}", self.phase)
    }
}

/// The default auditory layout: `count` order-4 gammatones with ERB bandwidths,
/// ERB-spaced over `[50 Hz, 0.45 fs]`.
pub fn default_gammatones(count: usize, fs: u32) -> Vec<GammatoneParams> {
    erb_space(count, DEFAULT_LOW_HZ, DEFAULT_HIGH_FRACTION * fs as f64)
        .into_iter()
        .map(GammatoneParams::new)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    Gammatone(GammatoneParams),
    Waveform(Vec<f64>),
}

/// A unit-norm, finite-support kernel waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    id: usize,
    samples: Vec<f64>,
    fs: u32,
}

impl Kernel {
    /// Normalizes `samples` to unit norm under the `1/fs` metric.
    pub fn from_waveform(id: usize, samples: Vec<f64>, fs: u32) -> Result<Self> {
        if fs == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::DegenerateKernel { len: 0 });
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Input(format!("kernel {id} has non-finite samples")));
        }
        let norm = (samples.iter().map(|s| s * s).sum::<f64>() / fs as f64).sqrt();
        if norm == 0.0 {
            return Err(Error::Input(format!("kernel {id} is identically zero")));
        }
        let samples = samples.into_iter().map(|s| s / norm).collect();
        Ok(Self { id, samples, fs })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn fs(&self) -> u32 {
        self.fs
    }

    pub fn support_len(&self) -> usize {
        self.samples.len()
    }

    /// Norm under the `1/fs` metric; 1 up to rounding.
    pub fn norm(&self) -> f64 {
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.fs as f64).sqrt()
    }
}

/// Samples `a·t^(n-1)·e^(-2πbt)·cos(2πft + φ)` on the grid `t = u/fs`, cuts the
/// tail once the envelope drops below `trunc_rel` of its peak, and normalizes.
pub fn make_gammatone(params: &GammatoneParams, fs: u32, trunc_rel: f64) -> Result<Kernel> {
    gammatone_kernel(0, params, fs, trunc_rel)
}

fn gammatone_kernel(id: usize, params: &GammatoneParams, fs: u32, trunc_rel: f64) -> Result<Kernel> {
    let fsf = fs as f64;
    let nyquist = fsf / 2.0;
    if !(params.f_center < nyquist) {
        return Err(Error::Aliasing {
            f_center: params.f_center,
            fs: fsf,
            nyquist,
        });
    }
    if !(params.f_center > 0.0) {
        return Err(Error::Config(format!(
            "center frequency must be positive, got {}",
            params.f_center
        )));
    }
    if params.order < 1 {
        return Err(Error::Config("gammatone order must be >= 1".into()));
    }
    let b = params.bandwidth_hz();
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::Config(format!("gammatone bandwidth must be positive, got {b}")));
    }
    if !(trunc_rel > 0.0 && trunc_rel < 1.0) {
        return Err(Error::Config(format!("trunc_rel must lie in (0, 1), got {trunc_rel}")));
    }

    let n1 = (params.order - 1) as f64;
    let decay = 2.0 * PI * b;
    let log_env = |t: f64| -> f64 {
        if n1 == 0.0 {
            -decay * t
        } else if t <= 0.0 {
            f64::NEG_INFINITY
        } else {
            n1 * t.ln() - decay * t
        }
    };
    let t_peak = n1 / decay;
    let log_peak = log_env(t_peak);
    let log_cut = log_peak + trunc_rel.ln();

    // Last sample past the peak whose envelope is still above the cut.
    let mut len = (t_peak * fsf).floor() as usize + 1;
    while log_env(len as f64 / fsf) >= log_cut {
        len += 1;
    }
    if len < 2 {
        return Err(Error::DegenerateKernel { len });
    }

    let samples: Vec<f64> = (0..len)
        .map(|u| {
            let t = u as f64 / fsf;
            let env = (log_env(t) - log_peak).exp();
            env * (2.0 * PI * params.f_center * t + params.phase).cos()
        })
        .collect();
    if samples.iter().filter(|s| **s != 0.0).count() < 2 {
        return Err(Error::DegenerateKernel { len: samples.len() });
    }
    Kernel::from_waveform(id, samples, fs)
}

/// The kernel ensemble Φ with a content digest used to pair spike files with banks.
#[derive(Debug, Clone)]
pub struct KernelBank {
    kernels: Vec<Kernel>,
    fs: u32,
    max_support: usize,
    bank_hash: u64,
}

impl KernelBank {
    /// Builds a bank from already-normalized kernels; ids are reassigned in order.
    pub fn from_kernels(kernels: Vec<Kernel>, fs: u32) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::Config("kernel bank is empty".into()));
        }
        if kernels.len() > MAX_KERNELS {
            return Err(Error::Config(format!(
                "{} kernels exceed the limit of {MAX_KERNELS}",
                kernels.len()
            )));
        }
        if let Some(k) = kernels.iter().find(|k| k.fs != fs) {
            return Err(Error::Config(format!(
                "kernel {} sampled at {} Hz, bank at {fs} Hz",
                k.id, k.fs
            )));
        }
        let kernels: Vec<Kernel> = kernels
            .into_iter()
            .enumerate()
            .map(|(id, k)| Kernel { id, ..k })
            .collect();
        let max_support = kernels.iter().map(Kernel::support_len).max().unwrap_or(0);
        let bank_hash = digest(&kernels, fs);
        Ok(Self {
            kernels,
            fs,
            max_support,
            bank_hash,
        })
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    pub fn kernel(&self, j: usize) -> &Kernel {
        &self.kernels[j]
    }

    pub fn fs(&self) -> u32 {
        self.fs
    }

    pub fn max_support(&self) -> usize {
        self.max_support
    }

    /// Longest kernel support in seconds (τ).
    pub fn tau_max(&self) -> f64 {
        self.max_support as f64 / self.fs as f64
    }

    pub fn bank_hash(&self) -> u64 {
        self.bank_hash
    }
}

fn digest(kernels: &[Kernel], fs: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(fs.to_le_bytes());
    h.update((kernels.len() as u64).to_le_bytes());
    for k in kernels {
        h.update((k.samples.len() as u64).to_le_bytes());
        for s in &k.samples {
            h.update(s.to_bits().to_le_bytes());
        }
    }
    let out = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&out[..8]);
    u64::from_le_bytes(first)
}

/// Builds a bank from gammatone records and/or explicit waveforms, in order.
pub fn build_bank(specs: &[KernelSpec], fs: u32) -> Result<KernelBank> {
    build_bank_with(specs, fs, DEFAULT_TRUNC_REL)
}

pub fn build_bank_with(specs: &[KernelSpec], fs: u32, trunc_rel: f64) -> Result<KernelBank> {
    if specs.is_empty() {
        return Err(Error::Config("kernel bank spec is empty".into()));
    }
    for (i, a) in specs.iter().enumerate() {
        if let Some(j) = specs[..i].iter().position(|b| b == a) {
            return Err(Error::Config(format!(
                "kernel record {i} duplicates record {j}"
            )));
        }
    }
    let kernels = specs
        .iter()
        .enumerate()
        .map(|(id, spec)| match spec {
            KernelSpec::Gammatone(p) => gammatone_kernel(id, p, fs, trunc_rel),
            KernelSpec::Waveform(w) => Kernel::from_waveform(id, w.clone(), fs),
        })
        .collect::<Result<Vec<_>>>()?;
    KernelBank::from_kernels(kernels, fs)
}

/// The default ERB-spaced gammatone bank.
pub fn default_bank(count: usize, fs: u32) -> Result<KernelBank> {
    let specs: Vec<KernelSpec> = default_gammatones(count, fs)
        .into_iter()
        .map(KernelSpec::Gammatone)
        .collect();
    build_bank(&specs, fs)
}

/// Parses the line-oriented bank spec format:
///
/// ```text
/// # comment
/// gammatone f=500 n=4 b=auto phase=0
/// ```
pub fn parse_bank_spec(text: &str) -> Result<Vec<KernelSpec>> {
    let mut specs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Format(format!("bank spec line {}: {msg}", lineno + 1));
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("gammatone") => {}
            Some(other) => return Err(err(format!("unknown record type `{other}`"))),
            None => continue,
        }
        let mut f_center = None;
        let mut params = GammatoneParams::new(0.0);
        for field in fields {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{field}`")))?;
            let num = |v: &str| -> Result<f64> {
                v.parse::<f64>()
                    .map_err(|_| err(format!("bad number `{v}` for `{key}`")))
            };
            match key {
                "f" => f_center = Some(num(value)?),
                "n" => {
                    params.order = value
                        .parse()
                        .map_err(|_| err(format!("bad order `{value}`")))?
                }
                "b" => {
                    params.bandwidth = if value == "auto" {
                        Bandwidth::Auto
                    } else {
                        Bandwidth::Hz(num(value)?)
                    }
                }
                "phase" => params.phase = num(value)?,
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        params.f_center = f_center.ok_or_else(|| err("missing f=<Hz>".into()))?;
        specs.push(KernelSpec::Gammatone(params));
    }
    Ok(specs)
}

pub fn load_bank_spec(path: &Path) -> Result<Vec<KernelSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_bank_spec(&text)
}

/// Renders gammatone records in the spec file format.
pub fn format_bank_spec(params: &[GammatoneParams]) -> String {
    let mut out = String::new();
    for p in params {
        out.push_str(&p.to_string());
        out.push('\n');
    }
    out
}

/// Pairwise kernel cross-correlations
/// `ρ_jk(ℓ) = Σ_u Φ^j[u] Φ^k[u+ℓ] / fs` for every lag with overlap.
///
/// Only pairs `j ≤ k` are stored; `ρ_kj(ℓ)` is read back as `ρ_jk(-ℓ)`, so the
/// symmetry holds bit-for-bit.
#[derive(Debug, Clone)]
pub struct CorrTable {
    m: usize,
    lens: Vec<usize>,
    pairs: Vec<Vec<f64>>,
    bank_hash: u64,
}

impl CorrTable {
    fn pair_index(&self, j: usize, k: usize) -> usize {
        debug_assert!(j <= k);
        // Row-major upper triangle.
        j * self.m - j * (j + 1) / 2 + k
    }

    pub fn num_kernels(&self) -> usize {
        self.m
    }

    pub fn bank_hash(&self) -> u64 {
        self.bank_hash
    }

    pub fn support_len(&self, j: usize) -> usize {
        self.lens[j]
    }

    /// Lags with possible overlap: `-(L_j - 1) ..= L_k - 1`.
    pub fn lag_range(&self, j: usize, k: usize) -> (i64, i64) {
        (-(self.lens[j] as i64 - 1), self.lens[k] as i64 - 1)
    }

    /// `ρ_jk(lag)`, zero outside the overlap window.
    pub fn get(&self, j: usize, k: usize, lag: i64) -> f64 {
        let (j, k, lag) = if j <= k { (j, k, lag) } else { (k, j, -lag) };
        let offset = lag + self.lens[j] as i64 - 1;
        let seq = &self.pairs[self.pair_index(j, k)];
        if offset < 0 || offset as usize >= seq.len() {
            0.0
        } else {
            seq[offset as usize]
        }
    }
}

/// Builds the full correlation table with one FFT product per kernel pair.
pub fn cross_corr_table(bank: &KernelBank) -> CorrTable {
    let m = bank.len();
    let fs = bank.fs() as f64;
    let lens: Vec<usize> = bank.kernels.iter().map(Kernel::support_len).collect();
    let cache = SpectrumCache::new(2 * bank.max_support() - 1);
    let spectra: Vec<_> = bank.kernels.iter().map(|k| cache.forward(&k.samples)).collect();
    let reversed: Vec<_> = bank
        .kernels
        .iter()
        .map(|k| {
            let rev: Vec<f64> = k.samples.iter().rev().copied().collect();
            cache.forward(&rev)
        })
        .collect();

    let index: Vec<(usize, usize)> = (0..m).flat_map(|j| (j..m).map(move |k| (j, k))).collect();
    let pairs: Vec<Vec<f64>> = index
        .par_iter()
        .map(|&(j, k)| {
            let len = lens[j] + lens[k] - 1;
            let mut seq = cache.product_inverse(&reversed[j], &spectra[k], len);
            for v in &mut seq {
                *v /= fs;
            }
            if j == k {
                // Autocorrelations are even; zero lag is the squared norm, exactly 1.
                let c = lens[j] - 1;
                for l in 1..lens[j] {
                    let v = 0.5 * (seq[c - l] + seq[c + l]);
                    seq[c - l] = v;
                    seq[c + l] = v;
                }
                seq[c] = 1.0;
            }
            seq
        })
        .collect();

    CorrTable {
        m,
        lens,
        pairs,
        bank_hash: bank.bank_hash(),
    }
}
