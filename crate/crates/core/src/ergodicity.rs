//! Drift-condition verification, small-set certification, and geometric
//! ergodicity certificates.
//!
//! The drift condition asks for a weight `V >= 1`, a set `C`, and constants
//! `delta > 0`, `b < infty` with `PV <= (1-delta) V + b 1_C` pointwise.
//! When `delta` and `b` are not supplied, [`check_drift`] computes the best
//! feasible pair and re-verifies the inequality by an independent
//! matrix-vector product.

use nalgebra::DVector;

use crate::chain::MarkovChain;
use crate::error::{Error, Result};
use crate::norms::{self, Weight};
use crate::powers::{self, GelfandLimit};
use crate::spectral::{self, GapMethod, GELFAND_N_MAX, GELFAND_TOL};

/// Residual tolerance for certificate re-verification.
pub const CERT_TOL: f64 = 1e-9;
/// Minorization masses below this are treated as numerical dust.
pub const EPS_MIN: f64 = 1e-6;

/// Witness for the drift inequality `PV <= (1-delta) V + b 1_C`.
#[derive(Debug, Clone)]
pub struct DriftCertificate {
    pub v: Weight,
    pub c: Vec<usize>,
    pub delta: f64,
    pub b: f64,
    /// `max_x (PV(x) - (1-delta) V(x) - b 1_C(x)) / max(V(x), 1)`,
    /// re-verified post-hoc.
    pub residual: f64,
}

fn sorted_unique(mut c: Vec<usize>, n: usize) -> Result<Vec<usize>> {
    c.sort_unstable();
    c.dedup();
    if let Some(&last) = c.last() {
        if last >= n {
            return Err(Error::DimensionMismatch { expected: n, got: last + 1 });
        }
    }
    Ok(c)
}

/// Verify (or, with `delta`/`b` omitted, compute) a drift certificate.
///
/// With both omitted: `delta = 1 - max_{x not in C} PV(x)/V(x)` (an error if
/// that is not positive) and `b = max_{x in C} (PV(x) - (1-delta)V(x))+`.
pub fn check_drift(
    chain: &MarkovChain,
    v: &Weight,
    c: &[usize],
    delta: Option<f64>,
    b: Option<f64>,
) -> Result<DriftCertificate> {
    let n = chain.n();
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
    }
    let c = sorted_unique(c.to_vec(), n)?;
    let in_c = membership(&c, n);
    let pv = chain.p() * v.values();

    let delta = match delta {
        Some(d) => d,
        None => {
            let mut worst: Option<(usize, f64)> = None;
            for x in 0..n {
                if in_c[x] {
                    continue;
                }
                let ratio = pv[x] / v.values()[x];
                if worst.map_or(true, |(_, r)| ratio > r) {
                    worst = Some((x, ratio));
                }
            }
            match worst {
                None => 1.0, // C covers every state
                Some((state, ratio)) => {
                    if ratio >= 1.0 - chain.tol() {
                        return Err(Error::DriftFails { state, ratio });
                    }
                    1.0 - ratio
                }
            }
        }
    };
    let b = match b {
        Some(b) => b,
        None => c
            .iter()
            .map(|&x| (pv[x] - (1.0 - delta) * v.values()[x]).max(0.0))
            .fold(0.0, f64::max),
    };
    // Independent pointwise re-verification. The slack is measured
    // relative to V(x): for weights spanning many orders of magnitude an
    // absolute tolerance is unattainable in f64 at the large end and
    // vacuous at the small end.
    let slack_at =
        |x: usize| (pv[x] - (1.0 - delta) * v.values()[x] - if in_c[x] { b } else { 0.0 })
            / v.values()[x].max(1.0);
    let mut residual = f64::NEG_INFINITY;
    for x in 0..n {
        residual = residual.max(slack_at(x));
    }
    if residual > CERT_TOL {
        return Err(Error::DriftFails {
            state: (0..n)
                .max_by(|&a, &bb| slack_at(a).partial_cmp(&slack_at(bb)).unwrap())
                .unwrap(),
            ratio: residual,
        });
    }
    Ok(DriftCertificate { v: v.clone(), c, delta, b, residual })
}

fn membership(c: &[usize], n: usize) -> Vec<bool> {
    let mut m = vec![false; n];
    for &x in c {
        m[x] = true;
    }
    m
}

/// Witness for the minorization `P^m(x, .) >= eps nu(.)` for all `x in C`.
#[derive(Debug, Clone)]
pub struct SmallSetCertificate {
    pub c: Vec<usize>,
    pub m: usize,
    pub eps: f64,
    pub nu: DVector<f64>,
}

/// Find the smallest horizon `m <= m_max` at which `C` is small, taking
/// `nu~(y) = min_{x in C} P^m(x,y)` and `eps = sum_y nu~(y)`.
pub fn find_small_set(chain: &MarkovChain, c: &[usize], m_max: usize) -> Result<SmallSetCertificate> {
    let n = chain.n();
    let c = sorted_unique(c.to_vec(), n)?;
    if c.is_empty() {
        return Err(Error::NotApplicable("small-set candidate C is empty".into()));
    }
    let mut pm = chain.p().clone();
    let mut best_eps = 0.0f64;
    for m in 1..=m_max {
        let mut nu_tilde = DVector::zeros(n);
        for y in 0..n {
            let mn = c.iter().map(|&x| pm[(x, y)]).fold(f64::INFINITY, f64::min);
            nu_tilde[y] = mn;
        }
        let eps: f64 = nu_tilde.sum();
        best_eps = best_eps.max(eps);
        if eps > EPS_MIN {
            return Ok(SmallSetCertificate { c, m, eps, nu: nu_tilde / eps });
        }
        if m < m_max {
            pm = &pm * chain.p();
        }
    }
    Err(Error::NotSmallWithinHorizon { m_max, best_eps })
}

/// Witness for `max_x ||P^n(x,.) - pi||_V / V(x) <= B rho^n`.
#[derive(Debug, Clone)]
pub struct GeometricCertificate {
    pub b: f64,
    pub rho: f64,
    /// `(n, L(n))` with `L(n) = |||P^n - 1 (x) pi|||_V`, in log form to
    /// survive deep powers: the second component is `log L(n)`.
    pub per_n_log: Vec<(u64, f64)>,
    /// `L(n) = 0` exactly for n >= 1 (rank-one kernel).
    pub exact: bool,
}

/// Fit `(B, rho)` to the decay of `L(n) = |||P^n - 1 (x) pi|||_V` on a
/// doubling schedule; `rho` is the last-doubling slope, `B = max L(n)/rho^n`.
pub fn geometric_certificate(
    chain: &MarkovChain,
    v: &Weight,
    n_max: u64,
) -> Result<GeometricCertificate> {
    let structure = chain.analyze();
    let pi = structure
        .stationary()
        .map_err(|_| Error::NotApplicable("chain is reducible".into()))?
        .clone();
    if !structure.aperiodic {
        return Err(Error::NotApplicable("chain is periodic".into()));
    }
    let q = norms::deviation_kernel(chain, &pi)?;
    let trace =
        powers::power_norm_trace(&q, n_max, |m| norms::op_norm_v(m, v).expect("dims fixed"));
    let per_n_log: Vec<(u64, f64)> = trace.iter().map(|e| (e.n, e.log_norm)).collect();
    match powers::extrapolate_gelfand(&trace, GELFAND_TOL)? {
        GelfandLimit::ExactlyZero => Ok(GeometricCertificate {
            b: trace[0].log_norm.exp().max(1.0),
            rho: 0.0,
            per_n_log,
            exact: true,
        }),
        GelfandLimit::Converged(rho) => {
            if rho >= 1.0 {
                return Err(Error::GapZero);
            }
            let log_rho = rho.ln();
            let log_b = trace
                .iter()
                .map(|e| e.log_norm - e.n as f64 * log_rho)
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(GeometricCertificate { b: log_b.exp(), rho, per_n_log, exact: false })
        }
    }
}

/// Per-predicate witnesses for the finite-chain shadow of the
/// gap/ergodicity equivalences.
#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    /// (a) a drift certificate exists for an auto-selected sublevel set of V.
    pub drift: Option<DriftCertificate>,
    /// (b) the weighted-sup gap is positive.
    pub delta_v: f64,
    /// (c) the L2 gap (eigen route) is positive.
    pub delta_2: f64,
    /// (d) detailed balance holds.
    pub reversible: bool,
    /// (a) <=> (b) holds, and when (d), geometric ergodicity <=> (c).
    pub consistent: bool,
}

/// Evaluate the four predicates and check the implications testable on a
/// finite chain. `C` is auto-selected as the smallest sublevel set
/// `{x : V(x) <= q}` for which the drift check succeeds.
pub fn equivalence_report(chain: &MarkovChain, v: &Weight) -> Result<EquivalenceReport> {
    let structure = chain.analyze();
    if !structure.irreducible || !structure.aperiodic {
        return Err(Error::NotApplicable(
            "equivalence report requires an irreducible aperiodic chain".into(),
        ));
    }
    let drift = auto_drift(chain, v);
    let delta_v = spectral::gap_lv(chain, v, GELFAND_N_MAX)?.delta_v;
    let delta_2 = spectral::gap_l2(chain, GapMethod::Eigen)?;
    let reversible = structure.reversible;

    let a = drift.is_some();
    let bq = delta_v > 0.0;
    let cq = delta_2 > 0.0;
    let mut consistent = a == bq;
    if reversible {
        // Geometric ergodicity on a finite irreducible aperiodic chain is
        // predicate (a); Prop. 2's shadow requires it to match (c).
        consistent = consistent && (a == cq);
    }
    Ok(EquivalenceReport { drift, delta_v, delta_2, reversible, consistent })
}

/// Sweep sublevel sets of `V` (smallest first) and return the first drift
/// certificate that verifies.
pub fn auto_drift(chain: &MarkovChain, v: &Weight) -> Option<DriftCertificate> {
    let n = chain.n();
    let mut thresholds: Vec<f64> = v.values().iter().copied().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    for q in thresholds {
        let c: Vec<usize> = (0..n).filter(|&x| v.values()[x] <= q).collect();
        if let Ok(cert) = check_drift(chain, v, &c, None, None) {
            return Some(cert);
        }
    }
    None
}
