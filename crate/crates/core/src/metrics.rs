//! SNR, spike-rate statistics, the approximation error bound and the
//! overlap-chain partition used to study window convergence.

use serde::{Serialize, Serializer};

use crate::encoder::{SpikeTrain, ThresholdParams};
use crate::error::{Error, Result};
use crate::kernelbank::KernelBank;

/// `10·log10(||x||² / ||x − y||²)`. Exact reconstructions give `+∞`.
pub fn snr(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::Input(format!(
            "length mismatch: reference {} vs estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    let signal: f64 = reference.iter().map(|x| x * x).sum();
    if signal == 0.0 {
        return Err(Error::UndefinedSnr);
    }
    let noise: f64 = reference.iter().zip(estimate).map(|(x, y)| (x - y).powi(2)).sum();
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

/// Relative squared error bound for signals outside the kernel span:
/// `(δ + C·γ)²·(x_max + 1) / (1 − η)`.
pub fn approx_error_bound(delta: f64, gamma: f64, lipschitz: f64, x_max: f64, eta: f64) -> Result<f64> {
    for (name, v) in [
        ("delta", delta),
        ("gamma", gamma),
        ("lipschitz", lipschitz),
        ("x_max", x_max),
        ("eta", eta),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be finite and non-negative, got {v}")));
        }
    }
    if eta >= 1.0 {
        return Err(Error::Domain(format!("eta = {eta} violates the frame condition (eta < 1)")));
    }
    Ok((delta + lipschitz * gamma).powi(2) * (x_max + 1.0) / (1.0 - eta))
}

/// Chain of spike groups, latest first. Group `i+1` holds the not yet assigned
/// spikes whose support overlaps some spike of group `i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    /// Spike indices per group, ascending within a group.
    pub groups: Vec<Vec<usize>>,
    pub d_max: usize,
    /// `⌈2·m·τ/δ⌉`.
    pub d_bound: usize,
}

impl Partition {
    pub fn within_bound(&self) -> bool {
        self.d_max <= self.d_bound
    }

    /// Coverage, disjointness and adjacency-only overlap. Returns the first problem found.
    pub fn check(&self, spikes: &SpikeTrain, bank: &KernelBank) -> std::result::Result<(), String> {
        let n = spikes.len();
        let mut owner = vec![usize::MAX; n];
        for (g, group) in self.groups.iter().enumerate() {
            for &i in group {
                if i >= n {
                    return Err(format!("group {g} references spike {i} of {n}"));
                }
                if owner[i] != usize::MAX {
                    return Err(format!("spike {i} in groups {} and {g}", owner[i]));
                }
                owner[i] = g;
            }
        }
        if let Some(i) = owner.iter().position(|&g| g == usize::MAX) {
            return Err(format!("spike {i} not covered"));
        }
        let sup = supports(spikes, bank);
        for a in 0..n {
            for b in a + 1..n {
                if overlaps(sup[a], sup[b]) && owner[a].abs_diff(owner[b]) > 1 {
                    return Err(format!(
                        "spikes {a} (group {}) and {b} (group {}) overlap across non-adjacent groups",
                        owner[a], owner[b]
                    ));
                }
            }
        }
        Ok(())
    }
}

// Support of φ_i is u ∈ [t_i − L + 1, t_i].
fn supports(spikes: &SpikeTrain, bank: &KernelBank) -> Vec<(i64, i64)> {
    spikes
        .spikes
        .iter()
        .map(|s| {
            let t = s.sample_index as i64;
            (t - bank.kernel(s.kernel_id).support_len() as i64 + 1, t)
        })
        .collect()
}

fn overlaps(a: (i64, i64), b: (i64, i64)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

pub fn partition_overlap(spikes: &SpikeTrain, bank: &KernelBank, params: &ThresholdParams) -> Partition {
    let n = spikes.len();
    let d_bound = (2.0 * bank.len() as f64 * bank.tau_max() / params.refractory).ceil() as usize;
    if n == 0 {
        return Partition {
            groups: Vec::new(),
            d_max: 0,
            d_bound,
        };
    }
    let sup = supports(spikes, bank);
    let mut assigned = vec![false; n];
    let mut remaining = n;
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut current = vec![n - 1];
    assigned[n - 1] = true;
    remaining -= 1;
    loop {
        groups.push(current.clone());
        if remaining == 0 {
            break;
        }
        let lo = current.iter().map(|&i| sup[i].0).min().unwrap();
        let hi = current.iter().map(|&i| sup[i].1).max().unwrap();
        let mut next: Vec<usize> = (0..n)
            .filter(|&i| !assigned[i] && overlaps(sup[i], (lo, hi)))
            .filter(|&i| current.iter().any(|&c| overlaps(sup[i], sup[c])))
            .collect();
        if next.is_empty() {
            // The chain broke: restart from the latest unassigned spike.
            next.push((0..n).rev().find(|&i| !assigned[i]).unwrap());
        }
        for &i in &next {
            assigned[i] = true;
        }
        remaining -= next.len();
        current = next;
    }
    let d_max = groups.iter().map(Vec::len).max().unwrap_or(0);
    Partition {
        groups,
        d_max,
        d_bound,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimes {
    pub encode_ms: f64,
    pub decode_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// `None` for an all-zero reference; `"inf"` for an exact match.
    #[serde(serialize_with = "ser_db")]
    pub snr_db: Option<f64>,
    /// SNR reached 80 dB, the double-precision stand-in for exact recovery.
    pub perfect: bool,
    pub spike_count: usize,
    pub spikes_per_second: f64,
    /// Spikes per second over the sample rate; the sample rate itself plays the
    /// role of the "Nyquist rate" here.
    pub nyquist_fraction: f64,
    pub fs: u32,
    pub signal_len: usize,
    pub params: ThresholdParams,
    pub runtime_ms: StageTimes,
}

fn ser_db<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        None => s.serialize_none(),
        Some(x) if x.is_infinite() => s.serialize_str(if *x > 0.0 { "inf" } else { "-inf" }),
        Some(x) => s.serialize_f64(*x),
    }
}

pub const PERFECT_SNR_DB: f64 = 80.0;

pub fn evaluate(
    signal: &[f64],
    spikes: &SpikeTrain,
    reconstruction: &[f64],
    params: &ThresholdParams,
    runtime_ms: StageTimes,
) -> Result<EvalReport> {
    if signal.len() != reconstruction.len() {
        return Err(Error::Input(format!(
            "signal has {} samples, reconstruction {}",
            signal.len(),
            reconstruction.len()
        )));
    }
    let snr_db = match snr(signal, reconstruction) {
        Ok(v) => Some(v),
        Err(Error::UndefinedSnr) => None,
        Err(e) => return Err(e),
    };
    let duration = signal.len() as f64 / spikes.fs as f64;
    let spikes_per_second = if duration > 0.0 {
        spikes.len() as f64 / duration
    } else {
        0.0
    };
    Ok(EvalReport {
        snr_db,
        perfect: snr_db.is_some_and(|v| v >= PERFECT_SNR_DB),
        spike_count: spikes.len(),
        spikes_per_second,
        nyquist_fraction: spikes_per_second / spikes.fs as f64,
        fs: spikes.fs,
        signal_len: signal.len(),
        params: *params,
        runtime_ms,
    })
}
