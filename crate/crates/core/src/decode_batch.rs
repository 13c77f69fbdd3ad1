//! Offline minimum-norm decoding: solve `P·α = T` over all spikes and
//! synthesize `X* = Σ α_i Φ^{j_i}(t_i − t)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::encoder::SpikeTrain;
use crate::error::{Error, Result};
use crate::gram::{assemble, GramSystem};
use crate::kernelbank::{CorrTable, Kernel, KernelBank};
use crate::linalg::{self, SolveMethod};

/// Hard cap on the batch system size; longer trains go through the windowed decoder.
pub const MAX_BATCH_SPIKES: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub method: SolveMethod,
    pub rank: usize,
    pub condition_estimate: f64,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub samples: Vec<f64>,
    pub alpha: Vec<f64>,
    pub solver_report: SolverReport,
}

/// Cholesky when well conditioned, otherwise the minimum-norm SVD solution.
pub fn solve_coefficients(system: &GramSystem) -> Result<(Vec<f64>, SolverReport)> {
    if let Some(i) = system.t.iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!("threshold {i} is not finite")));
    }
    let sol = linalg::solve_spd(&system.p, &system.t);
    Ok((
        sol.x.iter().copied().collect(),
        SolverReport {
            method: sol.method,
            rank: sol.rank,
            condition_estimate: sol.condition_estimate,
        },
    ))
}

/// Adds `coeff · Φ(t − u)` over `u ∈ [0, out.len())`.
pub(crate) fn add_spike_waveform(out: &mut [f64], kernel: &Kernel, t: u64, coeff: f64) {
    let samples = kernel.samples();
    let t = t as usize;
    // u = t − v must satisfy 0 ≤ u < out.len().
    let v_lo = (t + 1).saturating_sub(out.len());
    let v_hi = samples.len().min(t + 1);
    for v in v_lo..v_hi {
        out[t - v] += coeff * samples[v];
    }
}

pub fn reconstruct(
    spikes: &SpikeTrain,
    alpha: &[f64],
    bank: &KernelBank,
    out_len: usize,
) -> Result<Vec<f64>> {
    if alpha.len() != spikes.len() {
        return Err(Error::Input(format!(
            "{} coefficients for {} spikes",
            alpha.len(),
            spikes.len()
        )));
    }
    let mut out = vec![0.0; out_len];
    for (s, &a) in spikes.spikes.iter().zip(alpha) {
        add_spike_waveform(&mut out, bank.kernel(s.kernel_id), s.sample_index, a);
    }
    Ok(out)
}

pub fn decode(spikes: &SpikeTrain, bank: &KernelBank, table: &CorrTable) -> Result<Reconstruction> {
    if spikes.len() > MAX_BATCH_SPIKES {
        return Err(Error::TooLarge {
            what: "spike count",
            size: spikes.len(),
            limit: MAX_BATCH_SPIKES,
            hint: "use the windowed decoder (--window <w>) for long trains",
        });
    }
    let system = assemble(spikes, table)?;
    let (alpha, solver_report) = solve_coefficients(&system)?;
    let samples = reconstruct(spikes, &alpha, bank, spikes.signal_len)?;
    Ok(Reconstruction {
        samples,
        alpha,
        solver_report,
    })
}

/// `P·α − T`, mostly for diagnostics.
pub fn constraint_residual(system: &GramSystem, alpha: &[f64]) -> Vec<f64> {
    let a = DVector::from_column_slice(alpha);
    (&system.p * a - &system.t).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Spike;
    use crate::kernelbank::{cross_corr_table, default_bank};
    use nalgebra::DMatrix;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn system(p: DMatrix<f64>, t: Vec<f64>) -> GramSystem {
        let n = t.len();
        GramSystem {
            p,
            t: DVector::from_vec(t),
            spikes: SpikeTrain::empty(1000, n, 0),
        }
    }

    #[test]
    fn identity_gives_thresholds() {
        let s = system(DMatrix::identity(3, 3), vec![0.5, -1.0, 2.0]);
        let (alpha, rep) = solve_coefficients(&s).unwrap();
        assert_eq!(alpha, vec![0.5, -1.0, 2.0]);
        assert_eq!(rep.method, SolveMethod::Cholesky);
    }

    #[test]
    fn empty_and_nonfinite() {
        let s = system(DMatrix::zeros(0, 0), vec![]);
        assert!(solve_coefficients(&s).unwrap().0.is_empty());
        let s = system(DMatrix::identity(1, 1), vec![f64::NAN]);
        assert!(matches!(solve_coefficients(&s), Err(Error::Input(_))));
    }

    #[test]
    fn recovers_random_spd_solutions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let n = rng.random_range(1..=10);
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let p = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
            let alpha0 = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let t = &p * &alpha0;
            let (alpha, _) = solve_coefficients(&system(p, t.iter().copied().collect())).unwrap();
            for (x, y) in alpha.iter().zip(alpha0.iter()) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn duplicate_spike_matches_deduplicated_system() {
        let bank = default_bank(4, 8000).unwrap();
        let table = cross_corr_table(&bank);
        let base = vec![(0usize, 300u64, 0.4), (2, 320, -0.2), (1, 360, 0.3)];
        let mk = |v: &[(usize, u64, f64)]| SpikeTrain {
            spikes: v
                .iter()
                .map(|&(k, t, thr)| Spike {
                    kernel_id: k,
                    sample_index: t,
                    threshold: thr,
                })
                .collect(),
            fs: 8000,
            signal_len: 1200,
            bank_hash: bank.bank_hash(),
        };
        let clean = decode(&mk(&base), &bank, &table).unwrap();
        let mut dup = base.clone();
        dup.insert(1, base[0]);
        let dup = decode(&mk(&dup), &bank, &table).unwrap();
        assert_eq!(dup.solver_report.method, SolveMethod::Svd);
        assert_eq!(dup.solver_report.rank, 3);
        for (a, b) in clean.samples.iter().zip(&dup.samples) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn reconstruct_basics() {
        let bank = default_bank(2, 8000).unwrap();
        let empty = SpikeTrain::empty(8000, 500, bank.bank_hash());
        assert!(reconstruct(&empty, &[], &bank, 500).unwrap().iter().all(|&v| v == 0.0));

        let k = bank.kernel(1);
        let t = k.support_len() as u64 + 10;
        let one = SpikeTrain {
            spikes: vec![Spike {
                kernel_id: 1,
                sample_index: t,
                threshold: 1.0,
            }],
            ..SpikeTrain::empty(8000, 2 * k.support_len() + 20, bank.bank_hash())
        };
        let out = reconstruct(&one, &[1.0], &bank, one.signal_len).unwrap();
        for (v, &s) in k.samples().iter().enumerate() {
            assert_eq!(out[t as usize - v], s);
        }
        assert!(reconstruct(&one, &[], &bank, 10).is_err());
    }

    #[test]
    fn batch_cap_is_enforced() {
        let bank = default_bank(1, 8000).unwrap();
        let table = cross_corr_table(&bank);
        let spikes = (0..=MAX_BATCH_SPIKES as u64)
            .map(|t| Spike {
                kernel_id: 0,
                sample_index: t * 1000,
                threshold: 0.0,
            })
            .collect();
        let train = SpikeTrain {
            spikes,
            ..SpikeTrain::empty(8000, 10, bank.bank_hash())
        };
        assert!(matches!(decode(&train, &bank, &table), Err(Error::TooLarge { .. })));
    }
}
