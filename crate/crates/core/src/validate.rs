//! Named numerical checks of the codec's guarantees, run by `spikecodec validate`.
//!
//! Each check prints one line: `PASS|FAIL <name>: <margins>`.

use std::f64::consts::PI;

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decode_batch::decode;
use crate::decode_window::stream_decode;
use crate::encoder::{encode, encode_with, replay_thresholds, EncodeOptions, SpikeTrain, ThresholdParams};
use crate::error::{Error, Result};
use crate::gram::{
    condition_bounds, estimate_beta_all, estimate_beta_past, gram_matrix, sine_chain, tridiag_inverse_entry_chebyshev,
    SineChain,
};
use crate::kernelbank::{cross_corr_table, default_bank, CorrTable, KernelBank};
use crate::linalg::symmetric_condition;
use crate::metrics::{partition_overlap, snr};
use crate::sigio::{random_synth_spec, synth_in_span, SpikeFile};

pub const CHECKS: [&str; 9] = [
    "sine-chain",
    "condition-bounds",
    "perfect-reconstruction",
    "isi",
    "spike-rate",
    "threshold-replay",
    "window-convergence",
    "partition",
    "assumption2",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Runs the checks in `only` (all when `None`). Each check gets its own RNG
/// stream derived from `seed`.
pub fn run_checks(seed: u64, only: Option<&[String]>) -> Result<Vec<CheckResult>> {
    let selected: Vec<&'static str> = match only {
        None => CHECKS.to_vec(),
        Some(names) => names
            .iter()
            .map(|n| {
                CHECKS
                    .iter()
                    .copied()
                    .find(|c| c == n)
                    .ok_or_else(|| Error::Config(format!("unknown check `{n}`; known: {}", CHECKS.join(", "))))
            })
            .collect::<Result<_>>()?,
    };
    selected
        .into_iter()
        .map(|name| {
            let idx = CHECKS.iter().position(|c| *c == name).unwrap() as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(idx));
            run_one(name, &mut rng)
        })
        .collect()
}

fn run_one(name: &'static str, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let (passed, detail) = match name {
        "sine-chain" => check_sine_chain()?,
        "condition-bounds" => check_condition_bounds(rng, 200)?,
        "perfect-reconstruction" => check_perfect(rng, 50)?,
        "isi" => check_isi(rng, 100)?,
        "spike-rate" => check_rate(rng, 100)?,
        "threshold-replay" => check_replay(rng, 100)?,
        "window-convergence" => check_window(rng, 3)?,
        "partition" => check_partition(rng, 10)?,
        "assumption2" => check_assumption2()?,
        _ => unreachable!("names are validated by run_checks"),
    };
    Ok(CheckResult { name, passed, detail })
}

/// A random signal with `max |x| = peak`: a few sinusoids plus noise.
pub fn random_bounded_signal<R: Rng + ?Sized>(rng: &mut R, len: usize, fs: u32, peak: f64) -> Vec<f64> {
    let parts: Vec<(f64, f64, f64)> = (0..rng.random_range(1..6))
        .map(|_| {
            (
                rng.random_range(80.0..0.4 * fs as f64),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.1..1.0),
            )
        })
        .collect();
    let noise = rng.random_range(0.0..0.5);
    let mut x: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 / fs as f64;
            parts.iter().map(|&(f, ph, a)| a * (2.0 * PI * f * t + ph).sin()).sum::<f64>()
                + noise * rng.random_range(-1.0..1.0)
        })
        .collect();
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / m);
    }
    x
}

fn check_sine_chain() -> Result<(bool, String)> {
    let mut worst_inv = 0.0f64;
    for n in 3..=50 {
        let chain = sine_chain(n, 8000, 500.0)?;
        let p1 = chain.gram.view((0, 0), (n - 1, n - 1)).into_owned();
        let inv = p1.try_inverse().ok_or_else(|| Error::Domain("sine-chain block is singular".into()))?;
        let closed = SineChain::closed_form_inverse(n);
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                worst_inv = worst_inv.max((inv[(i, j)] - closed[(i, j)]).abs());
                worst_inv = worst_inv.max((inv[(i, j)] - tridiag_inverse_entry_chebyshev(n, i + 1, j + 1)).abs());
            }
        }
    }
    let chain = sine_chain(100, 8000, 500.0)?;
    let rest = estimate_beta_all(&chain.train, &chain.table)[49].powi(2);
    let closed = SineChain::rest_projection_sq(50, 100);
    let big = sine_chain(400, 8000, 500.0)?;
    let rest_big = estimate_beta_all(&big.train, &big.table)[199].powi(2);
    let ok = worst_inv < 1e-9 && (rest - closed).abs() < 1e-6 && rest_big > rest && rest >= 0.97;
    Ok((
        ok,
        format!(
            "max |inverse - closed form| {worst_inv:.2e} (tol 1e-9); rest projection^2 N=100,n=50 {rest:.9} vs closed form {closed:.9} (0.98 quoted); N=400,n=200 {rest_big:.6}"
        ),
    ))
}

/// One random spike set of size `k` drawn densely enough to overlap.
fn random_spike_set<R: Rng + ?Sized>(rng: &mut R, bank: &KernelBank, k: usize) -> SpikeTrain {
    let span = bank.max_support() as u64;
    let base = span;
    let mut spikes: Vec<crate::encoder::Spike> = Vec::with_capacity(k);
    while spikes.len() < k {
        let s = crate::encoder::Spike {
            kernel_id: rng.random_range(0..bank.len()),
            sample_index: base + rng.random_range(0..span * k as u64 / 2 + 1),
            threshold: 0.0,
        };
        if !spikes.iter().any(|o| o.kernel_id == s.kernel_id && o.sample_index == s.sample_index) {
            spikes.push(s);
        }
    }
    let mut train = SpikeTrain {
        spikes,
        ..SpikeTrain::empty(bank.fs(), (base + span * k as u64) as usize, bank.bank_hash())
    };
    train.sort();
    train
}

/// Empirical condition numbers against the per-set envelope. Returns
/// `(sets, lower violations, upper violations, worst log10 margins)`.
pub fn condition_envelope_trial<R: Rng + ?Sized>(
    rng: &mut R,
    bank: &KernelBank,
    table: &CorrTable,
    sets: usize,
) -> Result<(usize, usize, usize, f64, f64)> {
    let (mut lo_v, mut hi_v) = (0, 0);
    let (mut lo_margin, mut hi_margin) = (f64::INFINITY, f64::INFINITY);
    let mut done = 0;
    while done < sets {
        let k = rng.random_range(1..=12);
        let train = random_spike_set(rng, bank, k);
        let beta = estimate_beta_past(&train, table, k).into_iter().fold(0.0f64, f64::max);
        if beta >= 0.95 {
            continue;
        }
        done += 1;
        let kappa = symmetric_condition(&gram_matrix(&train.spikes, table));
        let b = condition_bounds(k, beta)?;
        let lk = kappa.log10();
        let tol = 1e-9;
        if lk < b.log10_lower - tol {
            lo_v += 1;
        }
        if lk > b.log10_upper + tol {
            hi_v += 1;
        }
        lo_margin = lo_margin.min(lk - b.log10_lower);
        hi_margin = hi_margin.min(b.log10_upper - lk);
    }
    Ok((done, lo_v, hi_v, lo_margin, hi_margin))
}

fn check_condition_bounds(rng: &mut ChaCha8Rng, sets: usize) -> Result<(bool, String)> {
    let bank = default_bank(10, 8000)?;
    let table = cross_corr_table(&bank);
    let (n, lo_v, hi_v, lo_m, hi_m) = condition_envelope_trial(rng, &bank, &table, sets)?;
    Ok((
        lo_v == 0 && hi_v == 0,
        format!(
            "{n} sets, below lower bound {lo_v}, above upper bound {hi_v}; min log10 margins lower {lo_m:.3}, upper {hi_m:.3}"
        ),
    ))
}

fn check_perfect(rng: &mut ChaCha8Rng, trials: usize) -> Result<(bool, String)> {
    let bank = default_bank(10, 8000)?;
    let table = cross_corr_table(&bank);
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let count = rng.random_range(1..=50);
        let spec = random_synth_spec(rng, &bank, count, 4000);
        let (x, train) = synth_in_span(&spec, &bank, &table)?;
        let r = decode(&train, &bank, &table)?;
        worst = worst.min(snr(&x, &r.samples)?);
    }
    Ok((worst >= 80.0, format!("{trials} in-span signals, min SNR {worst:.1} dB (need >= 80)")))
}

/// Encodes `trials` random `|x| ≤ 1` signals with `M = 2.2·√τ` and a random δ.
fn stable_runs<R: Rng + ?Sized>(
    rng: &mut R,
    bank: &KernelBank,
    trials: usize,
) -> Result<Vec<(Vec<f64>, SpikeTrain, ThresholdParams)>> {
    let m = 2.2 * bank.tau_max().sqrt();
    (0..trials)
        .map(|_| {
            let x = random_bounded_signal(rng, 2000, bank.fs(), 1.0);
            let p = ThresholdParams::new(rng.random_range(1e-4..1e-2), m, rng.random_range(0.002..0.02))?;
            let train = encode(&x, bank, &p)?;
            Ok((x, train, p))
        })
        .collect()
}

fn check_isi(rng: &mut ChaCha8Rng, trials: usize) -> Result<(bool, String)> {
    let bank = default_bank(10, 8000)?;
    let mut violations = 0;
    let mut min_ratio = f64::INFINITY;
    for (_, train, p) in stable_runs(rng, &bank, trials)? {
        let half = p.refractory_samples(bank.fs()) / 2.0;
        for times in train.per_kernel_times(bank.len()) {
            for w in times.windows(2) {
                let isi = (w[1] - w[0]) as f64;
                min_ratio = min_ratio.min(isi / half);
                if isi <= half {
                    violations += 1;
                }
            }
        }
    }
    Ok((
        violations == 0,
        format!("{trials} runs, {violations} ISI <= delta/2; min ISI/(delta/2) {min_ratio:.3}"),
    ))
}

fn check_rate(rng: &mut ChaCha8Rng, trials: usize) -> Result<(bool, String)> {
    let bank = default_bank(10, 8000)?;
    let mut violations = 0;
    let mut worst = 0.0f64;
    for (x, train, p) in stable_runs(rng, &bank, trials)? {
        let span = (x.len() + bank.max_support() - 1) as f64 / bank.fs() as f64;
        let rate = train.len() as f64 / span;
        let bound = 2.0 * bank.len() as f64 / p.refractory;
        worst = worst.max(rate / bound);
        if rate > bound {
            violations += 1;
        }
    }
    Ok((violations == 0, format!("{trials} runs, {violations} above 2m/delta; max rate/bound {worst:.3}")))
}

fn check_replay(rng: &mut ChaCha8Rng, trials: usize) -> Result<(bool, String)> {
    let bank = default_bank(8, 8000)?;
    let mut mismatched = 0;
    let mut spikes = 0;
    for _ in 0..trials {
        let peak = rng.random_range(0.1..1.0);
        let x = random_bounded_signal(rng, 1500, bank.fs(), peak);
        let p = ThresholdParams::new(
            rng.random_range(1e-4..1e-2),
            rng.random_range(0.01..0.5),
            rng.random_range(0.001..0.05),
        )?;
        let train = encode(&x, &bank, &p)?;
        spikes += train.len();
        let replay = replay_thresholds(&train, bank.len(), &p);
        let file = SpikeFile {
            train: train.clone(),
            params: p,
            gain: 1.0,
            thresholds_stored: false,
        };
        let back = SpikeFile::from_bytes(&file.to_bytes()?)?;
        let same = train
            .spikes
            .iter()
            .zip(&replay)
            .zip(&back.train.spikes)
            .all(|((s, r), b)| s.threshold.to_bits() == r.to_bits() && s.threshold.to_bits() == b.threshold.to_bits())
            && back.train.len() == train.len();
        if !same {
            mismatched += 1;
        }
    }
    Ok((
        mismatched == 0,
        format!("{trials} trains ({spikes} spikes), {mismatched} with a threshold mismatch after file roundtrip"),
    ))
}

/// Window-vs-batch errors for one measured-threshold gammatone train.
pub fn window_errors<R: Rng + ?Sized>(
    rng: &mut R,
    bank: &KernelBank,
    table: &CorrTable,
    windows: &[usize],
    target_spikes: usize,
) -> Result<(Vec<f64>, f64, usize)> {
    // Grow the signal until the train reaches the target size.
    let p = ThresholdParams::new(1e-3, 0.05, 0.005)?;
    let opts = EncodeOptions { store_measured: true };
    let mut len = 800;
    let x0 = random_bounded_signal(rng, 40_000, bank.fs(), 0.9);
    let train = loop {
        let t = encode_with(&x0[..len], bank, &p, opts)?;
        if t.len() >= target_spikes || len >= x0.len() {
            break t;
        }
        len = (len as f64 * (target_spikes as f64 / t.len().max(1) as f64).clamp(1.05, 2.0)) as usize;
        len = len.min(x0.len());
    };
    let batch = decode(&train, bank, table)?;
    let norm = batch.samples.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let dist = |a: &[f64]| a.iter().zip(&batch.samples).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let errs = windows
        .iter()
        .map(|&w| Ok(dist(&stream_decode(&train, bank, table, w)?.0.samples)))
        .collect::<Result<Vec<_>>>()?;
    let full = dist(&stream_decode(&train, bank, table, train.len())?.0.samples) / norm;
    Ok((errs, full, train.len()))
}

/// Least-squares slope of `log(err)` against `w`.
pub fn log_slope(windows: &[usize], errs: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = windows
        .iter()
        .zip(errs)
        .filter(|(_, e)| **e > 0.0)
        .map(|(&w, &e)| (w as f64, e.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    num / den
}

fn check_window(rng: &mut ChaCha8Rng, seeds: usize) -> Result<(bool, String)> {
    let bank = default_bank(10, 8000)?;
    let table = cross_corr_table(&bank);
    let windows = [25, 50, 100, 200];
    let mut mean = vec![0.0; windows.len()];
    let mut worst_full = 0.0f64;
    let mut sizes = Vec::new();
    for _ in 0..seeds {
        let (errs, full, n) = window_errors(rng, &bank, &table, &windows, 500)?;
        for (m, e) in mean.iter_mut().zip(&errs) {
            *m += e / seeds as f64;
        }
        worst_full = worst_full.max(full);
        sizes.push(n);
    }
    let monotone = mean.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    let slope = log_slope(&windows, &mean);
    Ok((
        monotone && worst_full <= 1e-6 && slope < 0.0,
        format!(
            "N = {sizes:?}; mean ||X_w - X_batch|| at w=25,50,100,200: {}; w=N rel {worst_full:.2e}; log slope {slope:.4}",
            mean.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    ))
}

fn check_partition(rng: &mut ChaCha8Rng, trials: usize) -> Result<(bool, String)> {
    let bank = default_bank(10, 8000)?;
    let mut invalid = 0;
    let mut over = 0;
    let mut worst = (0usize, 1usize);
    for (_, train, p) in stable_runs(rng, &bank, trials)? {
        let part = partition_overlap(&train, &bank, &p);
        if part.check(&train, &bank).is_err() {
            invalid += 1;
        }
        if !part.within_bound() {
            over += 1;
        }
        if part.d_max as f64 / part.d_bound.max(1) as f64 >= worst.0 as f64 / worst.1 as f64 {
            worst = (part.d_max, part.d_bound.max(1));
        }
    }
    Ok((
        invalid == 0 && over == 0,
        format!(
            "{trials} trains, {invalid} invalid partitions, {over} with d_max over bound; tightest d_max {} vs bound {}",
            worst.0, worst.1
        ),
    ))
}

fn check_assumption2() -> Result<(bool, String)> {
    let bank = default_bank(10, 8000)?;
    let table = cross_corr_table(&bank);
    let x = crate::corpus::synth_snippet(7, 8000, 0.15).samples;
    let p = ThresholdParams::new(1e-3, 0.05, 0.01)?;
    let train = encode(&x, &bank, &p)?;
    let beta = estimate_beta_all(&train, &table).into_iter().fold(0.0f64, f64::max);
    Ok((
        beta < 1.0,
        format!("{} spikes, max projection onto the rest {beta:.6} (margin {:.2e})", train.len(), 1.0 - beta),
    ))
}

pub fn format_report(results: &[CheckResult]) -> String {
    let mut out: String = results.iter().map(|r| r.line() + "\n").collect();
    let failed = results.iter().filter(|r| !r.passed).count();
    out.push_str(&format!("{} checks, {} failed\n", results.len(), failed));
    out
}
