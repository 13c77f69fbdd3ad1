//! Dense symmetric solves shared by the batch and windowed decoders.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Cholesky solutions with a condition estimate above this fall back to SVD.
pub const COND_FALLBACK: f64 = 1e12;
/// Singular values below `PINV_RTOL · σ_max` are treated as zero.
pub const PINV_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Cholesky,
    Svd,
}

#[derive(Debug, Clone)]
pub struct SpdSolution {
    pub x: DVector<f64>,
    pub method: SolveMethod,
    pub rank: usize,
    pub condition_estimate: f64,
}

/// Solves the symmetric PSD system `a·x = b`: Cholesky when it succeeds and is
/// well conditioned, otherwise the minimum-norm SVD pseudo-inverse solution.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> SpdSolution {
    let n = a.nrows();
    if n == 0 {
        return SpdSolution {
            x: DVector::zeros(0),
            method: SolveMethod::Cholesky,
            rank: 0,
            condition_estimate: 1.0,
        };
    }
    if let Some(chol) = a.clone().cholesky() {
        let cond = condition_estimate(a, &chol);
        if cond.is_finite() && cond <= COND_FALLBACK {
            return SpdSolution {
                x: chol.solve(b),
                method: SolveMethod::Cholesky,
                rank: n,
                condition_estimate: cond,
            };
        }
    }
    let (x, rank, cond) = pinv_solve(a, b);
    SpdSolution {
        x,
        method: SolveMethod::Svd,
        rank,
        condition_estimate: cond,
    }
}

/// Minimum-norm least-squares solution via SVD. Returns `(x, rank, σ_max/σ_min)`.
pub fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, usize, f64) {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let cutoff = PINV_RTOL * smax;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut x = DVector::zeros(a.ncols());
    let mut rank = 0;
    let mut smin = f64::INFINITY;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        smin = smin.min(s);
        if s > cutoff && s > 0.0 {
            rank += 1;
            let coeff = u.column(i).dot(b) / s;
            x.axpy(coeff, &vt.row(i).transpose(), 1.0);
        }
    }
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    (x, rank, cond)
}

/// Power iteration for λ_max and inverse iteration (through the Cholesky factor)
/// for λ_min. Deterministic start vector; a handful of sweeps is enough for a
/// fallback trigger.
pub fn condition_estimate(a: &DMatrix<f64>, chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let n = a.nrows();
    if n == 1 {
        return 1.0;
    }
    const SWEEPS: usize = 24;
    let start = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.618_033_988_75).fract());

    let mut v = start.normalize();
    let mut lmax = 0.0;
    for _ in 0..SWEEPS {
        let w = a * &v;
        lmax = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return f64::INFINITY;
        }
        v = w / norm;
    }

    let mut v = start.normalize();
    let mut inv_lmin = 0.0;
    for _ in 0..SWEEPS {
        let w = chol.solve(&v);
        inv_lmin = v.dot(&w);
        let norm = w.norm();
        if !norm.is_finite() || norm == 0.0 {
            return f64::INFINITY;
        }
        v = w / norm;
    }
    if inv_lmin <= 0.0 {
        f64::INFINITY
    } else {
        lmax * inv_lmin
    }
}

/// Exact 2-norm condition number of a symmetric matrix from its eigenvalues.
pub fn symmetric_condition(a: &DMatrix<f64>) -> f64 {
    let (lmin, lmax) = eigen_extremes(a);
    if lmin <= 0.0 {
        f64::INFINITY
    } else {
        lmax / lmin
    }
}

/// `(λ_min, λ_max)` of a symmetric matrix.
pub fn eigen_extremes(a: &DMatrix<f64>) -> (f64, f64) {
    if a.nrows() == 0 {
        return (1.0, 1.0);
    }
    let eig = a.clone().symmetric_eigen();
    let lmin = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let lmax = eig.eigenvalues.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    (lmin, lmax)
}
