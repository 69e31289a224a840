//! Scaled matrix powers on a doubling schedule.
//!
//! Norms of `Q^n` for large `n` underflow f64 long before the quantities of
//! interest (their n-th roots, or `log` of the norm) become degenerate, so
//! powers are kept as a normalized matrix plus a separate log scale factor.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A matrix stored as `exp(log_scale) * m`, with `m` normalized so its
/// largest absolute entry is 1 (unless the matrix is exactly zero).
#[derive(Debug, Clone)]
pub struct ScaledMatrix {
    pub m: DMatrix<f64>,
    pub log_scale: f64,
}

impl ScaledMatrix {
    pub fn new(m: DMatrix<f64>) -> Self {
        let mut s = ScaledMatrix { m, log_scale: 0.0 };
        s.renormalize();
        s
    }

    pub fn is_zero(&self) -> bool {
        self.m.amax() == 0.0
    }

    fn renormalize(&mut self) {
        let a = self.m.amax();
        if a > 0.0 {
            self.m /= a;
            self.log_scale += a.ln();
        } else {
            self.log_scale = 0.0;
        }
    }

    pub fn squared(&self) -> ScaledMatrix {
        let mut s = ScaledMatrix { m: &self.m * &self.m, log_scale: 2.0 * self.log_scale };
        s.renormalize();
        s
    }

    /// `log` of `norm(exp(log_scale) * m)` for any absolutely homogeneous
    /// norm evaluated on the stored normalized matrix.
    pub fn log_norm(&self, norm: impl Fn(&DMatrix<f64>) -> f64) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.log_scale + norm(&self.m).ln()
        }
    }
}

/// One entry of a power-norm trace: `n`, `log ||Q^n||`, and the Gelfand
/// root `||Q^n||^{1/n}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTraceEntry {
    pub n: u64,
    pub log_norm: f64,
    pub root: f64,
}

/// Evaluate `||Q^n||` for `n = 1, 2, 4, ..., <= n_max` by repeated squaring.
/// Stops early if a power is exactly zero (the zero entry is recorded).
pub fn power_norm_trace(
    q: &DMatrix<f64>,
    n_max: u64,
    norm: impl Fn(&DMatrix<f64>) -> f64,
) -> Vec<PowerTraceEntry> {
    let mut out = Vec::new();
    let mut cur = ScaledMatrix::new(q.clone());
    let mut n = 1u64;
    loop {
        let log_norm = cur.log_norm(&norm);
        out.push(PowerTraceEntry { n, log_norm, root: (log_norm / n as f64).exp() });
        if log_norm == f64::NEG_INFINITY || n * 2 > n_max {
            break;
        }
        cur = cur.squared();
        n *= 2;
    }
    out
}

/// Outcome of extrapolating a Gelfand trace `||Q^n||^{1/n} -> r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GelfandLimit {
    /// Some power of `Q` is exactly zero (nilpotent / exact rank-one case);
    /// the spectral radius is 0.
    ExactlyZero,
    Converged(f64),
}

/// Extrapolate the limit of `||Q^n||^{1/n}` from a doubling trace via the
/// slope of `log ||Q^n||` between the last two doublings, which cancels the
/// norm's constant prefactor. Convergence is declared when two successive
/// slope estimates differ by less than `tol`.
pub fn extrapolate_gelfand(trace: &[PowerTraceEntry], tol: f64) -> Result<GelfandLimit> {
    if let Some(last) = trace.last() {
        if last.log_norm == f64::NEG_INFINITY {
            return Ok(GelfandLimit::ExactlyZero);
        }
    }
    if trace.len() < 3 {
        return Err(Error::GelfandNotConverged {
            n_max: trace.last().map_or(0, |e| e.n),
            spread: f64::INFINITY,
        });
    }
    let slope = |a: &PowerTraceEntry, b: &PowerTraceEntry| -> f64 {
        ((b.log_norm - a.log_norm) / (b.n - a.n) as f64).exp()
    };
    let k = trace.len();
    let prev = slope(&trace[k - 3], &trace[k - 2]);
    let last = slope(&trace[k - 2], &trace[k - 1]);
    let spread = (last - prev).abs();
    if spread < tol {
        Ok(GelfandLimit::Converged(last))
    } else {
        Err(Error::GelfandNotConverged { n_max: trace[k - 1].n, spread })
    }
}
