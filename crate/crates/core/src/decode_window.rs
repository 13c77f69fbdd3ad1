//! Streaming windowed reconstruction.
//!
//! Each incoming spike is orthogonalized against only the last `w` spikes:
//!
//! ```text
//! φ⊥ = φ_{n+1} − Σ c_i φ_i,     G_w·c = g,  g_i = <φ_i, φ_{n+1}>
//! X*_{n+1} = X*_n + (<X, φ⊥> / ||φ⊥||²)·φ⊥
//! ```
//!
//! `<X, φ⊥> = T_{n+1} − Σ c_i T_i` comes from the thresholds alone, so decoding
//! needs nothing but the spike file. Cost per spike is one `w×w` factorization.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::decode_batch::{add_spike_waveform, Reconstruction, SolverReport};
use crate::encoder::{Spike, SpikeTrain};
use crate::error::{Error, Result};
use crate::gram::{check_compat, gram_matrix, spike_inner};
use crate::kernelbank::{CorrTable, KernelBank};
use crate::linalg::{self, SolveMethod};

/// Spikes whose windowed orthogonal complement has less energy than this are skipped.
pub const DEGENERATE_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct OrthoComplement {
    /// Coefficients over the window spikes, oldest first.
    pub coeffs: Vec<f64>,
    /// `||φ⊥||² = 1 − gᵀc`, clamped at zero.
    pub norm_sq: f64,
    pub degenerate: bool,
    pub method: SolveMethod,
    pub condition: f64,
}

pub fn ortho_complement<'a, I>(new_spike: &Spike, window: I, table: &CorrTable) -> OrthoComplement
where
    I: IntoIterator<Item = &'a Spike>,
{
    let window: Vec<Spike> = window.into_iter().copied().collect();
    let diag = spike_inner(table, new_spike, new_spike);
    if window.is_empty() {
        return OrthoComplement {
            coeffs: Vec::new(),
            norm_sq: diag,
            degenerate: diag < DEGENERATE_EPS,
            method: SolveMethod::Cholesky,
            condition: 1.0,
        };
    }
    let gw: DMatrix<f64> = gram_matrix(&window, table);
    let g = DVector::from_iterator(window.len(), window.iter().map(|s| spike_inner(table, s, new_spike)));
    let sol = linalg::solve_spd(&gw, &g);
    let norm_sq = (diag - g.dot(&sol.x)).max(0.0);
    OrthoComplement {
        coeffs: sol.x.iter().copied().collect(),
        norm_sq,
        degenerate: norm_sq < DEGENERATE_EPS,
        method: sol.method,
        condition: sol.condition_estimate,
    }
}

/// One line of the `--trace` stream.
#[derive(Debug, Clone, Serialize)]
pub struct StepTrace {
    pub n: usize,
    pub sample_index: u64,
    pub kernel_id: usize,
    pub window: usize,
    pub norm_sq: f64,
    pub coeff: f64,
    pub degenerate: bool,
    pub condition: f64,
}

#[derive(Debug, Clone)]
pub struct WindowState {
    w: usize,
    // Train indices of the spikes currently in the window.
    window: VecDeque<(usize, Spike)>,
    out: Vec<f64>,
    alpha: Vec<f64>,
    pushed: usize,
    skipped: usize,
    used_svd: bool,
    max_condition_seen: f64,
}

impl WindowState {
    pub fn new(w: usize, out_len: usize) -> Result<Self> {
        if w < 1 {
            return Err(Error::Config("window size must be >= 1".into()));
        }
        Ok(Self {
            w,
            window: VecDeque::with_capacity(w),
            out: vec![0.0; out_len],
            alpha: Vec::new(),
            pushed: 0,
            skipped: 0,
            used_svd: false,
            max_condition_seen: 1.0,
        })
    }

    pub fn window_size(&self) -> usize {
        self.w
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn output(&self) -> &[f64] {
        &self.out
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn max_condition_seen(&self) -> f64 {
        self.max_condition_seen
    }

    /// Folds one spike into the reconstruction.
    pub fn push_spike(&mut self, spike: Spike, bank: &KernelBank, table: &CorrTable) -> Result<StepTrace> {
        if let Some((_, last)) = self.window.back() {
            if spike.sample_index < last.sample_index {
                return Err(Error::Sequencing {
                    last: last.sample_index,
                    got: spike.sample_index,
                });
            }
        }
        if spike.kernel_id >= bank.len() {
            return Err(Error::Input(format!(
                "spike references kernel {} but the bank has {}",
                spike.kernel_id,
                bank.len()
            )));
        }
        if !spike.threshold.is_finite() {
            return Err(Error::Input(format!(
                "non-finite threshold at sample {}",
                spike.sample_index
            )));
        }

        let n = self.pushed;
        self.pushed += 1;
        self.alpha.push(0.0);

        let oc = ortho_complement(&spike, self.window.iter().map(|(_, s)| s), table);
        if oc.condition.is_finite() {
            self.max_condition_seen = self.max_condition_seen.max(oc.condition);
        }
        self.used_svd |= oc.method == SolveMethod::Svd;

        let mut trace = StepTrace {
            n,
            sample_index: spike.sample_index,
            kernel_id: spike.kernel_id,
            window: self.window.len(),
            norm_sq: oc.norm_sq,
            coeff: 0.0,
            degenerate: oc.degenerate,
            condition: oc.condition,
        };
        if oc.degenerate {
            // Already represented by the window; it joins neither the output nor the window.
            self.skipped += 1;
            return Ok(trace);
        }

        let projected: f64 = self
            .window
            .iter()
            .zip(&oc.coeffs)
            .map(|((_, s), c)| c * s.threshold)
            .sum();
        let coeff = (spike.threshold - projected) / oc.norm_sq;
        trace.coeff = coeff;

        add_spike_waveform(&mut self.out, bank.kernel(spike.kernel_id), spike.sample_index, coeff);
        self.alpha[n] += coeff;
        for ((idx, s), c) in self.window.iter().zip(&oc.coeffs) {
            add_spike_waveform(&mut self.out, bank.kernel(s.kernel_id), s.sample_index, -coeff * c);
            self.alpha[*idx] -= coeff * c;
        }

        if self.window.len() == self.w {
            self.window.pop_front();
        }
        self.window.push_back((n, spike));
        Ok(trace)
    }

    pub fn finish(self) -> (Reconstruction, StreamDiagnostics) {
        let diagnostics = StreamDiagnostics {
            skipped: self.skipped,
            max_condition_seen: self.max_condition_seen,
        };
        let report = SolverReport {
            method: if self.used_svd {
                SolveMethod::Svd
            } else {
                SolveMethod::Cholesky
            },
            rank: self.pushed - self.skipped,
            condition_estimate: self.max_condition_seen,
        };
        (
            Reconstruction {
                samples: self.out,
                alpha: self.alpha,
                solver_report: report,
            },
            diagnostics,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StreamDiagnostics {
    pub skipped: usize,
    pub max_condition_seen: f64,
}

pub fn stream_decode(
    spikes: &SpikeTrain,
    bank: &KernelBank,
    table: &CorrTable,
    w: usize,
) -> Result<(Reconstruction, StreamDiagnostics)> {
    stream_decode_traced(spikes, bank, table, w, None)
}

/// As [`stream_decode`], writing one JSON object per spike to `trace`.
pub fn stream_decode_traced(
    spikes: &SpikeTrain,
    bank: &KernelBank,
    table: &CorrTable,
    w: usize,
    mut trace: Option<&mut dyn Write>,
) -> Result<(Reconstruction, StreamDiagnostics)> {
    check_compat(spikes, table)?;
    let mut state = WindowState::new(w, spikes.signal_len)?;
    for &s in &spikes.spikes {
        let step = state.push_spike(s, bank, table)?;
        if let Some(out) = trace.as_mut() {
            let line = serde_json::to_string(&step).expect("trace step serializes");
            writeln!(out, "{line}").map_err(|e| Error::io("<trace>", e))?;
        }
    }
    Ok(state.finish())
}
