//! Gram systems `P·α = T` over spike waveforms, projection-norm (β)
//! estimates, condition-number bounds, and the sine-chain construction whose
//! tridiagonal Gram has a closed-form inverse.
//!
//! Spike `i` contributes the waveform `φ_i(u) = Φ^{j_i}[t_i − u]`, so
//! `P[i,k] = <φ_i, φ_k> = ρ_{j_i j_k}(t_k − t_i)`.

use nalgebra::{DMatrix, DVector};

use crate::encoder::{Spike, SpikeTrain};
use crate::error::{Error, Result};
use crate::kernelbank::{build_bank, cross_corr_table, CorrTable, KernelBank, KernelSpec};
use crate::linalg::{self, COND_FALLBACK};

/// Residual energy below which a spike is treated as lying in the span of its predecessors.
const SPAN_TOL: f64 = 1e-10;

/// `<φ_a, φ_b>` read from the correlation table.
pub fn spike_inner(table: &CorrTable, a: &Spike, b: &Spike) -> f64 {
    let lag = b.sample_index as i64 - a.sample_index as i64;
    table.get(a.kernel_id, b.kernel_id, lag)
}

/// Gram matrix of an arbitrary spike slice. Exactly symmetric.
pub fn gram_matrix(spikes: &[Spike], table: &CorrTable) -> DMatrix<f64> {
    let n = spikes.len();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        p[(i, i)] = spike_inner(table, &spikes[i], &spikes[i]);
        for k in i + 1..n {
            let v = spike_inner(table, &spikes[i], &spikes[k]);
            p[(i, k)] = v;
            p[(k, i)] = v;
        }
    }
    p
}

#[derive(Debug, Clone)]
pub struct GramSystem {
    pub p: DMatrix<f64>,
    pub t: DVector<f64>,
    pub spikes: SpikeTrain,
}

impl GramSystem {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::eigen_extremes(&self.p).0
    }
}

pub(crate) fn check_compat(spikes: &SpikeTrain, table: &CorrTable) -> Result<()> {
    if spikes.bank_hash != table.bank_hash() {
        return Err(Error::Compat {
            expected: spikes.bank_hash,
            found: table.bank_hash(),
        });
    }
    if let Some(s) = spikes.spikes.iter().find(|s| s.kernel_id >= table.num_kernels()) {
        return Err(Error::Input(format!(
            "spike references kernel {} but the bank has {}",
            s.kernel_id,
            table.num_kernels()
        )));
    }
    Ok(())
}

pub fn assemble(spikes: &SpikeTrain, table: &CorrTable) -> Result<GramSystem> {
    check_compat(spikes, table)?;
    let p = gram_matrix(&spikes.spikes, table);
    let t = DVector::from_iterator(spikes.len(), spikes.spikes.iter().map(|s| s.threshold));
    Ok(GramSystem {
        p,
        t,
        spikes: spikes.clone(),
    })
}

/// `||P_{span(φ_1..φ_{i-1})} φ_i||` for the first `upto` spikes.
///
/// Runs an incremental Cholesky factorization of the growing Gram; a spike whose
/// residual energy falls below `SPAN_TOL` already lies in the span, gets the
/// value 1, and is left out of the factor (the pseudo-inverse answer).
pub fn estimate_beta_past(spikes: &SpikeTrain, table: &CorrTable, upto: usize) -> Vec<f64> {
    let upto = upto.min(spikes.len());
    let mut basis: Vec<usize> = Vec::new();
    // Row r holds the first r+1 entries of the lower-triangular factor.
    let mut factor: Vec<Vec<f64>> = Vec::new();
    let mut out = Vec::with_capacity(upto);
    for i in 0..upto {
        let s = &spikes.spikes[i];
        let mut v = Vec::with_capacity(basis.len() + 1);
        for (r, &b) in basis.iter().enumerate() {
            let g = spike_inner(table, &spikes.spikes[b], s);
            let row = &factor[r];
            let mut acc = g;
            for c in 0..r {
                acc -= row[c] * v[c];
            }
            v.push(acc / row[r]);
        }
        let proj_sq: f64 = v.iter().map(|x| x * x).sum();
        let diag = spike_inner(table, s, s);
        let resid = diag - proj_sq;
        out.push(proj_sq.max(0.0).sqrt().min(1.0));
        if resid > SPAN_TOL * diag {
            v.push(resid.sqrt());
            factor.push(v);
            basis.push(i);
        }
    }
    out
}

/// `||P_{span(all others)} φ_n||` for every spike.
///
/// Uses `1 − 1/(P⁻¹)_nn` when `P` is well conditioned, otherwise an SVD
/// projection per spike.
pub fn estimate_beta_all(spikes: &SpikeTrain, table: &CorrTable) -> Vec<f64> {
    let p = gram_matrix(&spikes.spikes, table);
    let n = p.nrows();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![0.0];
    }
    if let Some(chol) = p.clone().cholesky() {
        let cond = linalg::condition_estimate(&p, &chol);
        if cond <= COND_FALLBACK {
            let inv = chol.inverse();
            return (0..n)
                .map(|i| {
                    let sq = p[(i, i)] - 1.0 / inv[(i, i)];
                    sq.clamp(0.0, 1.0).sqrt()
                })
                .collect();
        }
    }
    (0..n)
        .map(|i| {
            let rest: Vec<usize> = (0..n).filter(|&k| k != i).collect();
            let g = DVector::from_iterator(rest.len(), rest.iter().map(|&k| p[(k, i)]));
            let sub = p.select_rows(&rest).select_columns(&rest);
            let (c, _, _) = linalg::pinv_solve(&sub, &g);
            g.dot(&c).clamp(0.0, 1.0).sqrt()
        })
        .collect()
}

/// Envelope on the worst-case condition number of Gram matrices of `k`
/// successive spikes whose past-projection norms are at most `β`:
/// `(1−β²)^{−k+1} ≤ C_k ≤ (1+(k−1)β)·((1−β²)/2)^{−k+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionBounds {
    pub k: usize,
    pub beta: f64,
    pub log10_lower: f64,
    pub log10_upper: f64,
    /// `10^log10_lower`, `+∞` when not representable.
    pub lower: f64,
    pub upper: f64,
}

impl ConditionBounds {
    pub fn contains(&self, kappa: f64) -> bool {
        let lk = kappa.log10();
        lk >= self.log10_lower - 1e-12 && lk <= self.log10_upper + 1e-12
    }
}

pub fn condition_bounds(k: usize, beta: f64) -> Result<ConditionBounds> {
    if k < 1 {
        return Err(Error::Domain("k must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Domain(format!("beta must lie in [0, 1), got {beta}")));
    }
    let e = (k - 1) as f64;
    let one_minus = 1.0 - beta * beta;
    let log10_lower = -e * one_minus.log10();
    let log10_upper = (1.0 + e * beta).log10() - e * (one_minus / 2.0).log10();
    Ok(ConditionBounds {
        k,
        beta,
        log10_lower,
        log10_upper,
        lower: 10f64.powf(log10_lower),
        upper: 10f64.powf(log10_upper),
    })
}

/// Upper bound on `β_d²`, the squared projection norm of any unit vector in the
/// span of a `d`-spike group onto the remaining spikes:
/// `(1 + (1−β²)/(d²β²))^{−1}`.
pub fn beta_d_bound(beta: f64, d: usize) -> Result<f64> {
    if d < 1 {
        return Err(Error::Domain("d must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Domain(format!("beta must lie in [0, 1), got {beta}")));
    }
    if beta == 0.0 {
        return Ok(0.0);
    }
    let d = d as f64;
    Ok(1.0 / (1.0 + (1.0 - beta * beta) / (d * d * beta * beta)))
}

/// Chebyshev polynomial of the second kind, `U_k(x)`, by recurrence.
pub fn chebyshev_u(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 2.0 * x);
    if k == 0 {
        return prev;
    }
    for _ in 1..k {
        let next = 2.0 * x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Entry `(i, j)` (1-based) of the inverse of the `(n−1)×(n−1)` tridiagonal
/// matrix with unit diagonal and `−1/2` off-diagonals: `2·min(i,j)·(n−max(i,j))/n`.
pub fn tridiag_inverse_entry(n: usize, i: usize, j: usize) -> f64 {
    let (lo, hi) = (i.min(j) as f64, i.max(j) as f64);
    2.0 * lo * (n as f64 - hi) / n as f64
}

/// The same entry through the Chebyshev form
/// `(−1)^{i+j+1}·2·U_{i−1}(−1)·U_{n−1−j}(−1)/U_{n−1}(−1)` for `i ≤ j`.
pub fn tridiag_inverse_entry_chebyshev(n: usize, i: usize, j: usize) -> f64 {
    let (i, j) = (i.min(j), i.max(j));
    let sign = if (i + j + 1) % 2 == 0 { 1.0 } else { -1.0 };
    sign * 2.0 * chebyshev_u(i - 1, -1.0) * chebyshev_u(n - 1 - j, -1.0) / chebyshev_u(n - 1, -1.0)
}

/// Half-overlapped single-cycle sine spikes: each spike's head cancels the
/// previous spike's tail, giving `<φ_i, φ_{i±1}> = −1/2` and zero beyond.
#[derive(Debug, Clone)]
pub struct SineChain {
    pub bank: KernelBank,
    pub table: CorrTable,
    pub train: SpikeTrain,
    pub gram: DMatrix<f64>,
}

impl SineChain {
    /// Closed-form `P_1⁻¹` for the leading `(n−1)×(n−1)` block.
    pub fn closed_form_inverse(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n - 1, n - 1, |i, j| tridiag_inverse_entry(n, i + 1, j + 1))
    }

    /// Squared projection of spike `n` (1-based) onto its `n−1` predecessors: `(n−1)/(2n)`.
    pub fn past_projection_sq(n: usize) -> f64 {
        (n as f64 - 1.0) / (2.0 * n as f64)
    }

    /// Squared projection of spike `n` onto all other spikes of an `N`-chain.
    pub fn rest_projection_sq(n: usize, total: usize) -> f64 {
        let past = Self::past_projection_sq(n);
        let future = if total > n {
            Self::past_projection_sq(total - n + 1)
        } else {
            0.0
        };
        past + future
    }
}

pub fn sine_chain(count: usize, fs: u32, cycles_hz: f64) -> Result<SineChain> {
    if count < 3 {
        return Err(Error::Config(format!("sine chain needs at least 3 spikes, got {count}")));
    }
    let period = fs as f64 / cycles_hz;
    let len = period.round() as usize;
    if (period - len as f64).abs() > 1e-9 || len < 4 || !len.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "fs / cycles_hz = {period} must be an even integer >= 4"
        )));
    }
    let wave: Vec<f64> = (0..len)
        .map(|u| (2.0 * std::f64::consts::PI * u as f64 / len as f64).sin())
        .collect();
    let bank = build_bank(&[KernelSpec::Waveform(wave)], fs)?;
    let table = cross_corr_table(&bank);
    let half = (len / 2) as u64;
    let first = len as u64 - 1;
    let spikes: Vec<Spike> = (0..count as u64)
        .map(|i| Spike {
            kernel_id: 0,
            sample_index: first + i * half,
            threshold: 0.0,
        })
        .collect();
    let signal_len = (first + count as u64 * half) as usize + 1;
    let train = SpikeTrain {
        spikes,
        fs,
        signal_len,
        bank_hash: bank.bank_hash(),
    };
    let gram = gram_matrix(&train.spikes, &table);
    Ok(SineChain {
        bank,
        table,
        train,
        gram,
    })
}
