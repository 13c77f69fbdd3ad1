//! Acceptance criteria 1-9. Runs sequentially (timing criteria need a quiet
//! machine), prints one PASS/FAIL line per criterion and exits non-zero if any fail.
//!
//! Oracles here work in the sample domain (explicit waveforms on a common
//! grid) instead of reusing the correlation table.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spikecodec::corpus::synthetic_corpus;
use spikecodec::decode_batch::decode;
use spikecodec::decode_window::stream_decode;
use spikecodec::encoder::{encode, encode_with, EncodeOptions, Spike, SpikeTrain, ThresholdParams};
use spikecodec::gram::{condition_bounds, sine_chain, SineChain};
use spikecodec::kernelbank::{cross_corr_table, default_bank, KernelBank};
use spikecodec::sigio::{random_synth_spec, SpikeFile};
use spikecodec::sweep::{rate_curve, run_sweep, trend, SweepConfig, WindowRule};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// `φ(u) = Φ[t − u]` on the grid `u ∈ [0, len)`.
fn waveform(bank: &KernelBank, s: &Spike, len: usize) -> DVector<f64> {
    let k = bank.kernel(s.kernel_id).samples();
    DVector::from_fn(len, |u, _| {
        let v = s.sample_index as i64 - u as i64;
        if v >= 0 && (v as usize) < k.len() {
            k[v as usize]
        } else {
            0.0
        }
    })
}

fn inner(a: &DVector<f64>, b: &DVector<f64>, fs: u32) -> f64 {
    a.dot(b) / fs as f64
}

fn snr_db(x: &[f64], y: &[f64]) -> f64 {
    let s: f64 = x.iter().map(|v| v * v).sum();
    let e: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    if e == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (s / e).log10()
    }
}

fn bounded_input<R: Rng>(rng: &mut R, len: usize, fs: u32) -> Vec<f64> {
    let tones: Vec<(f64, f64, f64)> = (0..rng.random_range(1..5))
        .map(|_| (rng.random_range(100.0..3000.0), rng.random_range(0.0..2.0 * PI), rng.random_range(0.2..1.0)))
        .collect();
    let noise = rng.random_range(0.0..0.6);
    let mut x: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 / fs as f64;
            tones.iter().map(|&(f, p, a)| a * (2.0 * PI * f * t + p).sin()).sum::<f64>() + noise * rng.random_range(-1.0..1.0)
        })
        .collect();
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let target = rng.random_range(0.3..1.0);
    x.iter_mut().for_each(|v| *v *= target / peak);
    x
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let bank = default_bank(10, 8000).unwrap();
    let table = cross_corr_table(&bank);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let len = 3000;
    let mut worst = f64::INFINITY;
    for _ in 0..50 {
        let count = rng.random_range(1..=50);
        let spec = random_synth_spec(&mut rng, &bank, count, len);
        let mut spikes: Vec<Spike> = spec
            .components
            .iter()
            .map(|c| Spike { kernel_id: c.kernel_id, sample_index: c.time, threshold: 0.0 })
            .collect();
        spikes.sort_by_key(|s| (s.sample_index, s.kernel_id));
        // X and its forced thresholds, both built from explicit waveforms.
        let mut x = DVector::zeros(len);
        for c in &spec.components {
            let w = waveform(&bank, &Spike { kernel_id: c.kernel_id, sample_index: c.time, threshold: 0.0 }, len);
            x += w * c.coeff;
        }
        for s in &mut spikes {
            s.threshold = inner(&x, &waveform(&bank, s, len), bank.fs());
        }
        let train = SpikeTrain { spikes, fs: bank.fs(), signal_len: len, bank_hash: bank.bank_hash() };
        let r = decode(&train, &bank, &table).unwrap();
        worst = worst.min(snr_db(x.as_slice(), &r.samples));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst >= 80.0 && secs < 10.0,
        format!("perfect reconstruction: min SNR over 50 in-span signals {worst:.1} dB (need >= 80), {secs:.2} s (need < 10)"),
    )
}

/// Encodes 100 random `|x| ≤ 1` inputs with `M = 2.05·√τ_max`. Returns
/// `(train, refractory in samples, convolution span in seconds)` per run.
fn stable_runs(bank: &KernelBank) -> Vec<(SpikeTrain, ThresholdParams, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let m = 2.05 * bank.tau_max().sqrt();
    (0..100)
        .map(|_| {
            let len = rng.random_range(1000..4000);
            let x = bounded_input(&mut rng, len, bank.fs());
            let p = ThresholdParams::new(rng.random_range(1e-4..5e-3), m, rng.random_range(0.001..0.03)).unwrap();
            let train = encode(&x, bank, &p).unwrap();
            let span = (len + bank.max_support() - 1) as f64 / bank.fs() as f64;
            (train, p, span)
        })
        .collect()
}

fn criterion_2(runs: &[(SpikeTrain, ThresholdParams, f64)], bank: &KernelBank) -> Outcome {
    let mut violations = 0;
    let mut intervals = 0;
    let mut min_ratio = f64::INFINITY;
    for (train, p, _) in runs {
        let half = p.refractory * bank.fs() as f64 / 2.0;
        let mut last: Vec<Option<u64>> = vec![None; bank.len()];
        for s in &train.spikes {
            if let Some(prev) = last[s.kernel_id] {
                let isi = (s.sample_index - prev) as f64;
                intervals += 1;
                min_ratio = min_ratio.min(isi / half);
                if isi <= half {
                    violations += 1;
                }
            }
            last[s.kernel_id] = Some(s.sample_index);
        }
    }
    outcome(
        violations == 0,
        format!("ISI bound: {violations} of {intervals} same-kernel intervals <= delta/2 over 100 runs; min ISI/(delta/2) {min_ratio:.3}"),
    )
}

fn criterion_3(runs: &[(SpikeTrain, ThresholdParams, f64)], bank: &KernelBank) -> Outcome {
    let mut violations = 0;
    let mut worst = 0.0f64;
    for (train, p, span) in runs {
        let rate = train.len() as f64 / span;
        let bound = 2.0 * bank.len() as f64 / p.refractory;
        worst = worst.max(rate / bound);
        if rate > bound {
            violations += 1;
        }
    }
    outcome(
        violations == 0,
        format!("spike-rate bound: {violations} of 100 runs above 2m/delta; max rate/bound {worst:.3}"),
    )
}

/// Largest projection norm of a spike onto the span of its predecessors, by
/// least squares on explicit waveforms.
fn beta_past_oracle(waves: &[DVector<f64>], fs: u32) -> f64 {
    let mut beta = 0.0f64;
    for i in 1..waves.len() {
        let a = DMatrix::from_columns(&waves[..i]);
        let b = &waves[i];
        let c = a.clone().svd(true, true).solve(b, 1e-12).unwrap();
        let proj = a * c;
        beta = beta.max((inner(&proj, &proj, fs) / inner(b, b, fs)).sqrt());
    }
    beta
}

fn criterion_4() -> Outcome {
    let bank = default_bank(10, 8000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let l = bank.max_support() as u64;
    let (mut sets, mut lower_v, mut upper_v) = (0, 0, 0);
    let mut worst_lower = f64::INFINITY;
    let mut worst_by_k = [f64::INFINITY; 13];
    while sets < 200 {
        let k = rng.random_range(1..=12usize);
        let mut spikes: Vec<Spike> = Vec::new();
        while spikes.len() < k {
            let s = Spike {
                kernel_id: rng.random_range(0..bank.len()),
                sample_index: l + rng.random_range(0..l * k as u64 / 2 + 1),
                threshold: 0.0,
            };
            if !spikes.iter().any(|o| o.kernel_id == s.kernel_id && o.sample_index == s.sample_index) {
                spikes.push(s);
            }
        }
        spikes.sort_by_key(|s| (s.sample_index, s.kernel_id));
        let len = (2 * l + l * k as u64) as usize;
        let waves: Vec<DVector<f64>> = spikes.iter().map(|s| waveform(&bank, s, len)).collect();
        let beta = beta_past_oracle(&waves, bank.fs());
        if beta >= 0.95 {
            continue;
        }
        sets += 1;
        let p = DMatrix::from_fn(k, k, |i, j| inner(&waves[i], &waves[j], bank.fs()));
        let sv = p.singular_values();
        let kappa = sv.max() / sv.min();
        let b = condition_bounds(k, beta).unwrap();
        let lk = kappa.log10();
        if lk < b.log10_lower - 1e-9 {
            lower_v += 1;
        }
        if lk > b.log10_upper + 1e-9 {
            upper_v += 1;
        }
        worst_lower = worst_lower.min(lk - b.log10_lower);
        worst_by_k[k] = worst_by_k[k].min(lk - b.log10_lower);
    }
    let failing_k: Vec<usize> = (1..=12).filter(|&k| worst_by_k[k] < -1e-9).collect();
    outcome(
        lower_v == 0 && upper_v == 0,
        format!(
            "condition envelope: 200 sets, {lower_v} below the lower bound (worst log10 margin {worst_lower:.3}, at k in {failing_k:?}), {upper_v} above the upper bound"
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut worst = 0.0f64;
    for n in 3..=50usize {
        let chain = sine_chain(n, 8000, 500.0).unwrap();
        let len = chain.train.signal_len;
        let waves: Vec<DVector<f64>> = chain.train.spikes[..n - 1].iter().map(|s| waveform(&chain.bank, s, len)).collect();
        let p1 = DMatrix::from_fn(n - 1, n - 1, |i, j| inner(&waves[i], &waves[j], 8000));
        let inv = p1.try_inverse().unwrap();
        for i in 1..n {
            for j in 1..n {
                let closed = 2.0 * i.min(j) as f64 * (n - i.max(j)) as f64 / n as f64;
                worst = worst.max((inv[(i - 1, j - 1)] - closed).abs());
            }
        }
    }
    let rest_sq = |total: usize| {
        // Least-squares projection of spike N/2 onto every other spike.
        let chain = sine_chain(total, 8000, 500.0).unwrap();
        let len = chain.train.signal_len;
        let waves: Vec<DVector<f64>> = chain.train.spikes.iter().map(|s| waveform(&chain.bank, s, len)).collect();
        let target = &waves[total / 2 - 1];
        let others: Vec<DVector<f64>> =
            waves.iter().enumerate().filter(|(i, _)| *i != total / 2 - 1).map(|(_, w)| w.clone()).collect();
        let a = DMatrix::from_columns(&others);
        let c = a.clone().svd(true, true).solve(target, 1e-12).unwrap();
        let proj = a * c;
        inner(&proj, &proj, 8000) / inner(target, target, 8000)
    };
    let r100 = rest_sq(100);
    let growth: Vec<f64> = [100, 200, 400].iter().map(|&n| rest_sq(n)).collect();
    let rising = growth.windows(2).all(|w| w[1] > w[0]) && growth[2] > 0.99;
    let quoted_ok = (r100 - 0.98).abs() <= 1e-6;
    outcome(
        worst <= 1e-9 && quoted_ok && rising,
        format!(
            "sine chain: inverse max error {worst:.2e} (tol 1e-9); rest projection^2 N=100,n=50 = {r100:.9}, required 0.98 +/- 1e-6 ({}; closed form {:.9}); N=100,200,400: {:?}",
            if quoted_ok { "met" } else { "NOT met" },
            SineChain::rest_projection_sq(50, 100),
            growth.iter().map(|v| (v * 1e6).round() / 1e6).collect::<Vec<_>>()
        ),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let bank = default_bank(10, 8000).unwrap();
    let table = cross_corr_table(&bank);
    let windows = [25usize, 50, 100, 200];
    let seeds = 5;
    let mut mean = [0.0; 4];
    let mut worst_full = 0.0f64;
    let mut sizes = Vec::new();
    let p = ThresholdParams::new(1e-3, 0.05, 0.005).unwrap();
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        // Grow the input until the train holds about 500 spikes.
        let x = bounded_input(&mut rng, 40_000, bank.fs());
        let mut len = 1000;
        let train = loop {
            let t = encode_with(&x[..len], &bank, &p, EncodeOptions { store_measured: true }).unwrap();
            if t.len() >= 480 || len == x.len() {
                break t;
            }
            len = ((len as f64 * 500.0 / t.len().max(1) as f64) as usize).clamp(len + 50, x.len());
        };
        sizes.push(train.len());
        let batch = decode(&train, &bank, &table).unwrap().samples;
        let dist = |y: &[f64]| batch.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        for (m, &w) in mean.iter_mut().zip(&windows) {
            *m += dist(&stream_decode(&train, &bank, &table, w).unwrap().0.samples) / seeds as f64;
        }
        let full = stream_decode(&train, &bank, &table, train.len()).unwrap().0.samples;
        let norm = batch.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst_full = worst_full.max(dist(&full) / norm);
    }
    let monotone = mean.windows(2).all(|w| w[1] <= w[0]);
    let pts: Vec<(f64, f64)> = windows.iter().zip(&mean).map(|(&w, &e)| (w as f64, e.max(1e-300).ln())).collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / 4.0;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / 4.0;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        monotone && worst_full <= 1e-6 && slope < 0.0 && secs < 60.0,
        format!(
            "window convergence: N = {sizes:?}; mean error at w=25,50,100,200: {}; w=N relative {worst_full:.2e}; log slope {slope:.4}; {secs:.1} s",
            mean.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn criterion_7() -> Outcome {
    let corpus = synthetic_corpus();
    let base = SweepConfig {
        grid: vec![0.02, 0.01, 0.005, 0.003, 0.002],
        window: WindowRule::Fixed(100),
        timing: false,
        ..SweepConfig::default()
    };
    let measured = run_sweep(&corpus, &SweepConfig { store_measured: true, ..base.clone() }).unwrap();
    let inferred = run_sweep(&corpus, &base).unwrap();
    let best = measured
        .iter()
        .filter(|r| r.nyq_frac <= 0.35 && r.snr_db.is_finite())
        .max_by(|a, b| a.snr_db.total_cmp(&b.snr_db))
        .unwrap();
    let curve = rate_curve(&measured);
    let rho = trend(&curve);
    let fmt = |c: &[spikecodec::sweep::CurvePoint]| {
        c.iter()
            .map(|p| format!("{:.3}@{:.1}dB", p.median_nyq_frac, p.median_snr_db))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let inferred_best = inferred
        .iter()
        .filter(|r| r.nyq_frac <= 0.35 && r.snr_db.is_finite())
        .map(|r| r.snr_db)
        .fold(f64::NEG_INFINITY, f64::max);
    outcome(
        best.snr_db >= 15.0 && rho > 0.0,
        format!(
            "rate/SNR curve (measured thresholds, w=100): best {:.1} dB at nyq {:.3} ({} at delta {}); median curve {}; rank correlation {rho:.3}; inferred-threshold curve {} (best {inferred_best:.1} dB); reference point 20 dB at 0.2",
            best.snr_db,
            best.nyq_frac,
            best.snippet,
            best.refractory,
            fmt(&curve),
            fmt(&rate_curve(&inferred)),
        ),
    )
}

fn criterion_8() -> Outcome {
    let bank = default_bank(32, 16_000).unwrap();
    let table = cross_corr_table(&bank);
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let x = bounded_input(&mut rng, 32_000, bank.fs());
    let p = ThresholdParams::new(1e-3, 0.05, 0.005).unwrap();
    let short = encode_with(&x[..16_000], &bank, &p, EncodeOptions { store_measured: true }).unwrap();
    let long = encode_with(&x, &bank, &p, EncodeOptions { store_measured: true }).unwrap();
    let time = |t: &SpikeTrain| {
        let mut total = 0.0;
        for _ in 0..5 {
            let s = Instant::now();
            stream_decode(t, &bank, &table, 50).unwrap();
            total += s.elapsed().as_secs_f64();
        }
        total / 5.0
    };
    let (a, b) = (time(&short), time(&long));
    let ratio = b / a;
    outcome(
        ratio <= 2.5,
        format!(
            "decode linearity: w=50, {} -> {} spikes, {:.1} ms -> {:.1} ms, ratio {ratio:.2} (need <= 2.5)",
            short.len(),
            long.len(),
            a * 1e3,
            b * 1e3
        ),
    )
}

fn criterion_9() -> Outcome {
    let bank = default_bank(8, 8000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let (mut bad_roundtrip, mut bad_infer, mut spikes) = (0, 0, 0);
    for _ in 0..100 {
        let len = rng.random_range(200..3000);
        let x = bounded_input(&mut rng, len, bank.fs());
        let p = ThresholdParams::new(rng.random_range(1e-4..1e-2), rng.random_range(0.01..0.5), rng.random_range(0.001..0.05))
            .unwrap();
        let train = encode(&x, &bank, &p).unwrap();
        spikes += train.len();
        let stored = SpikeFile { train: train.clone(), params: p, gain: rng.random_range(0.5..2.0), thresholds_stored: true };
        let bytes = stored.to_bytes().unwrap();
        let back = SpikeFile::from_bytes(&bytes).unwrap();
        if back != stored || back.to_bytes().unwrap() != bytes {
            bad_roundtrip += 1;
        }
        let lean = SpikeFile { thresholds_stored: false, ..stored };
        let lean_bytes = lean.to_bytes().unwrap();
        assert_eq!(lean_bytes.len(), 66 + 10 * train.len());
        let inferred = SpikeFile::from_bytes(&lean_bytes).unwrap();
        let exact = inferred.train.spikes.len() == train.spikes.len()
            && inferred.train.spikes.iter().zip(&train.spikes).all(|(a, b)| {
                a.kernel_id == b.kernel_id && a.sample_index == b.sample_index && a.threshold.to_bits() == b.threshold.to_bits()
            });
        if !exact {
            bad_infer += 1;
        }
    }
    outcome(
        bad_roundtrip == 0 && bad_infer == 0,
        format!("format integrity: 100 trains ({spikes} spikes), {bad_roundtrip} non-exact roundtrips, {bad_infer} with inferred thresholds differing"),
    )
}

fn main() {
    // Filter arguments from `cargo test -- <name>` select criteria by number.
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let bank = default_bank(10, 8000).unwrap();
    let mut runs = None;
    let mut failed = 0;
    for n in 1..=9 {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == &n.to_string()) {
            continue;
        }
        let o = match n {
            1 => criterion_1(),
            2 | 3 => {
                let r = runs.get_or_insert_with(|| stable_runs(&bank));
                if n == 2 {
                    criterion_2(r, &bank)
                } else {
                    criterion_3(r, &bank)
                }
            }
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(),
            7 => criterion_7(),
            8 => criterion_8(),
            _ => criterion_9(),
        };
        if !o.passed {
            failed += 1;
        }
        println!("criterion {n}: {} {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {failed} criteria failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
