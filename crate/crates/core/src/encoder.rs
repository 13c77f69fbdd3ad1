//! Convolve-then-threshold encoding with after-hyperpolarization (ahp)
//! thresholds.
//!
//! Each kernel's threshold sits at a baseline `C` and jumps by `M` at every
//! spike of that kernel; each jump decays linearly to zero over the refractory
//! period `δ`:
//!
//! ```text
//! T(t) = C + Σ_{t_p ∈ [t-δ, t]} M·(1 - (t - t_p)/δ)
//! ```
//!
//! Crossings are detected at sample resolution: a kernel fires at the first
//! sample where its convolution reaches the threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fftconv;
use crate::kernelbank::{Kernel, KernelBank};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    /// Baseline `C`, in convolution units.
    pub baseline: f64,
    /// ahp jump `M`.
    pub ahp_jump: f64,
    /// Refractory period `δ` in seconds.
    pub refractory: f64,
}

impl ThresholdParams {
    pub fn new(baseline: f64, ahp_jump: f64, refractory: f64) -> Result<Self> {
        let p = Self {
            baseline,
            ahp_jump,
            refractory,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("C", self.baseline),
            ("M", self.ahp_jump),
            ("delta", self.refractory),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn refractory_samples(&self, fs: u32) -> f64 {
        self.refractory * fs as f64
    }

    /// `M > 2·b·√τ`: the condition under which same-kernel spikes are more than δ/2 apart.
    pub fn is_stable(&self, amplitude_bound: f64, tau_max: f64) -> bool {
        self.ahp_jump > 2.0 * amplitude_bound * tau_max.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub kernel_id: usize,
    pub sample_index: u64,
    /// Threshold value at emission (the constraint `<X, φ_i> = T_i`).
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    pub spikes: Vec<Spike>,
    pub fs: u32,
    pub signal_len: usize,
    pub bank_hash: u64,
}

impl SpikeTrain {
    pub fn empty(fs: u32, signal_len: usize, bank_hash: u64) -> Self {
        Self {
            spikes: Vec::new(),
            fs,
            signal_len,
            bank_hash,
        }
    }

    pub fn len(&self) -> usize {
        self.spikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.signal_len as f64 / self.fs as f64
    }

    /// Spike times of each kernel, ascending.
    pub fn per_kernel_times(&self, num_kernels: usize) -> Vec<Vec<u64>> {
        let mut out = vec![Vec::new(); num_kernels];
        for s in &self.spikes {
            out[s.kernel_id].push(s.sample_index);
        }
        out
    }

    pub fn is_sorted(&self) -> bool {
        self.spikes
            .windows(2)
            .all(|w| (w[0].sample_index, w[0].kernel_id) < (w[1].sample_index, w[1].kernel_id))
    }

    pub(crate) fn sort(&mut self) {
        self.spikes.sort_by_key(|s| (s.sample_index, s.kernel_id));
    }
}

/// `C^j[t] = Σ_t' X[t'] Φ^j[t - t'] / fs` for `t ∈ [0, len + support - 1)`.
pub fn convolve(signal: &[f64], kernel: &Kernel) -> Vec<f64> {
    let scale = 1.0 / kernel.fs() as f64;
    let mut out = fftconv::convolve(signal, kernel.samples());
    for v in &mut out {
        *v *= scale;
    }
    out
}

/// Threshold of one kernel at sample `t` given that kernel's spike history.
///
/// Pure in its arguments: the encoder and the file reader both call this with
/// the same history slice, so replayed thresholds are bit-identical.
pub fn threshold_at(history: &[u64], t: u64, params: &ThresholdParams, fs: u32) -> f64 {
    let delta = params.refractory_samples(fs);
    let start = history.partition_point(|&tp| tp < t && (t - tp) as f64 > delta);
    let mut thr = params.baseline;
    for &tp in history[start..].iter().take_while(|&&tp| tp <= t) {
        thr += params.ahp_jump * (1.0 - (t - tp) as f64 / delta);
    }
    thr
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EncodeOptions {
    /// Record the measured convolution value instead of the model threshold.
    pub store_measured: bool,
}

pub fn encode(signal: &[f64], bank: &KernelBank, params: &ThresholdParams) -> Result<SpikeTrain> {
    encode_with(signal, bank, params, EncodeOptions::default())
}

pub fn encode_with(
    signal: &[f64],
    bank: &KernelBank,
    params: &ThresholdParams,
    options: EncodeOptions,
) -> Result<SpikeTrain> {
    params.validate()?;
    if let Some(i) = signal.iter().position(|x| !x.is_finite()) {
        return Err(Error::Input(format!("non-finite sample at index {i}")));
    }
    let peak = signal.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 1.0 {
        log::warn!("input peak {peak} exceeds 1; encoder expects peak-normalized signals");
    }
    if peak > 0.0 && !params.is_stable(peak, bank.tau_max()) {
        log::info!(
            "M = {} <= 2·b·√τ = {}; interspike intervals are not guaranteed to exceed δ/2",
            params.ahp_jump,
            2.0 * peak * bank.tau_max().sqrt()
        );
    }

    let fs = bank.fs();
    let per_kernel: Vec<Vec<Spike>> = bank
        .kernels()
        .par_iter()
        .map(|kernel| scan_kernel(&convolve(signal, kernel), kernel.id(), params, fs, options))
        .collect();

    let mut train = SpikeTrain {
        spikes: per_kernel.into_iter().flatten().collect(),
        fs,
        signal_len: signal.len(),
        bank_hash: bank.bank_hash(),
    };
    train.sort();
    Ok(train)
}

fn scan_kernel(
    conv: &[f64],
    kernel_id: usize,
    params: &ThresholdParams,
    fs: u32,
    options: EncodeOptions,
) -> Vec<Spike> {
    let mut history: Vec<u64> = Vec::new();
    let mut spikes = Vec::new();
    for (t, &c) in conv.iter().enumerate() {
        let t = t as u64;
        let thr = threshold_at(&history, t, params, fs);
        if c >= thr {
            spikes.push(Spike {
                kernel_id,
                sample_index: t,
                threshold: if options.store_measured { c } else { thr },
            });
            history.push(t);
        }
    }
    spikes
}

/// Recomputes every spike's model threshold from the spike times alone.
pub fn replay_thresholds(train: &SpikeTrain, num_kernels: usize, params: &ThresholdParams) -> Vec<f64> {
    let mut history = vec![Vec::new(); num_kernels];
    train
        .spikes
        .iter()
        .map(|s| {
            let h = &mut history[s.kernel_id];
            let thr = threshold_at(h, s.sample_index, params, train.fs);
            h.push(s.sample_index);
            thr
        })
        .collect()
}
