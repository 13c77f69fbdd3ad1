//! Signals built exactly inside the kernel span, `X = Σ α_p Φ^{j_p}(t_p − t)`.

use nalgebra::DVector;
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::decode_batch::add_spike_waveform;
use crate::encoder::{Spike, SpikeTrain};
use crate::error::{Error, Result};
use crate::gram::gram_matrix;
use crate::kernelbank::{CorrTable, KernelBank};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthComponent {
    pub kernel_id: usize,
    pub time: u64,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub components: Vec<SynthComponent>,
    pub length: usize,
}

/// Samples of `X` on `[0, length)` and the spike train whose thresholds are
/// the forced values `T_p = <X, φ_p>`, one spike per component.
pub fn synth_in_span(spec: &SynthSpec, bank: &KernelBank, table: &CorrTable) -> Result<(Vec<f64>, SpikeTrain)> {
    for (i, c) in spec.components.iter().enumerate() {
        if c.kernel_id >= bank.len() {
            return Err(Error::Input(format!(
                "component {i} uses kernel {} but the bank has {}",
                c.kernel_id,
                bank.len()
            )));
        }
        if c.time >= spec.length as u64 {
            return Err(Error::Input(format!("component {i} at {} is outside [0, {})", c.time, spec.length)));
        }
        if !c.coeff.is_finite() {
            return Err(Error::Input(format!("component {i} has a non-finite coefficient")));
        }
    }
    let mut comps = spec.components.clone();
    comps.sort_by_key(|c| (c.time, c.kernel_id));

    let mut samples = vec![0.0; spec.length];
    for c in &comps {
        add_spike_waveform(&mut samples, bank.kernel(c.kernel_id), c.time, c.coeff);
    }

    let mut spikes: Vec<Spike> = comps
        .iter()
        .map(|c| Spike {
            kernel_id: c.kernel_id,
            sample_index: c.time,
            threshold: 0.0,
        })
        .collect();
    let p = gram_matrix(&spikes, table);
    let t = p * DVector::from_iterator(comps.len(), comps.iter().map(|c| c.coeff));
    for (s, v) in spikes.iter_mut().zip(t.iter()) {
        s.threshold = *v;
    }
    // Coincident components share a waveform, hence a threshold; keep one spike.
    spikes.dedup_by_key(|s| (s.sample_index, s.kernel_id));

    let train = SpikeTrain {
        spikes,
        fs: bank.fs(),
        signal_len: spec.length,
        bank_hash: bank.bank_hash(),
    };
    Ok((samples, train))
}

/// `count` distinct components with coefficients in `[-1, 1]`, placed so the
/// full support lies inside the signal.
pub fn random_synth_spec<R: Rng + ?Sized>(rng: &mut R, bank: &KernelBank, count: usize, length: usize) -> SynthSpec {
    let mut components: Vec<SynthComponent> = Vec::with_capacity(count);
    let mut tries = 0;
    while components.len() < count && tries < 100 * count.max(1) {
        tries += 1;
        let kernel_id = rng.random_range(0..bank.len());
        let lo = bank.kernel(kernel_id).support_len() as u64 - 1;
        if lo >= length as u64 {
            continue;
        }
        let time = rng.random_range(lo..length as u64);
        if components.iter().any(|c| c.kernel_id == kernel_id && c.time == time) {
            continue;
        }
        components.push(SynthComponent {
            kernel_id,
            time,
            coeff: rng.random_range(-1.0..=1.0),
        });
    }
    SynthSpec { components, length }
}
