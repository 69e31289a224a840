//! Eigenstructure of the transition kernel, spectral gaps in `L2(pi)` and
//! weighted-sup spaces, pole-structure checks, and convergence-rate
//! verifiers.
//!
//! On a finite state space the spectrum of `P` is its eigenvalue set, so
//! the gap `delta_2` reduces to `1 - |lambda_2|`. Alternative routes are
//! kept as cross-checks:
//! - the contraction characterization `1 - sup ||nu P||_2 / ||nu||_2` over
//!   mean-zero measures (valid for reversible chains),
//! - the Gelfand route `1 - lim |||(P - 1 (x) pi)^n|||^{1/n}`, valid in
//!   both norms and for every admissible weight.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::chain::{ChainStructure, MarkovChain};
use crate::error::{Error, Result};
use crate::norms::{self, Weight};
use crate::powers::{self, GelfandLimit, PowerTraceEntry};

/// `|lambda - 1| <= UNIT_EIG_TOL` counts as the unit eigenvalue.
pub const UNIT_EIG_TOL: f64 = 1e-7;
/// `|lambda| >= 1 - BOUNDARY_TOL` counts as "on the unit circle".
pub const BOUNDARY_TOL: f64 = 1e-7;
/// Default deepest power for Gelfand traces.
pub const GELFAND_N_MAX: u64 = 16384;
/// Convergence tolerance for successive Gelfand slope estimates.
pub const GELFAND_TOL: f64 = 1e-3;

/// Eigenvalue report for a chain; gap fields are filled in by the caller
/// where applicable.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// All eigenvalues of `P`, sorted by decreasing modulus.
    pub eigenvalues: Vec<Complex64>,
    pub unit_eigenvalue_multiplicity: usize,
    /// Largest modulus among eigenvalues other than the one closest to 1.
    pub second_modulus: f64,
    /// `1 - second_modulus`, clamped to `[0, 1]`.
    pub delta_eig: f64,
}

/// All eigenvalues of `P`, sorted by decreasing modulus with a
/// deterministic tie-break.
///
/// Reversible chains go through the symmetric eigensolver on
/// `S(x,y) = sqrt(P(x,y) P(y,x))`, which equals `D^{1/2} P D^{-1/2}` under
/// detailed balance. This matters beyond taste: for heavily weighted
/// chains (for example deep birth-death truncations) the similarity has
/// condition numbers far beyond 1/eps, the plain matrix is violently
/// non-normal, and nonsymmetric QR returns eigenvalues that drift by
/// whole percents. The symmetrized form never touches the ratios.
pub fn eigen_spectrum(chain: &MarkovChain) -> Result<SpectrumReport> {
    let mut eigenvalues: Vec<Complex64> = if chain.analyze().reversible {
        let n = chain.n();
        let s = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                chain.p()[(i, i)]
            } else {
                (chain.p()[(i, j)] * chain.p()[(j, i)]).sqrt()
            }
        });
        s.symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|&l| Complex64::new(l, 0.0))
            .collect()
    } else {
        chain.p().clone().complex_eigenvalues().iter().copied().collect()
    };
    eigenvalues.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap()
            .then(b.re.partial_cmp(&a.re).unwrap())
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
    let unit_eigenvalue_multiplicity = eigenvalues
        .iter()
        .filter(|l| (*l - Complex64::new(1.0, 0.0)).norm() <= UNIT_EIG_TOL)
        .count();
    // Drop the single eigenvalue closest to 1; the rest bound the gap.
    let closest = eigenvalues
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            let da = (*a - Complex64::new(1.0, 0.0)).norm();
            let db = (*b - Complex64::new(1.0, 0.0)).norm();
            da.partial_cmp(&db).unwrap()
        })
        .map(|(i, _)| i);
    let second_modulus = eigenvalues
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != closest)
        .map(|(_, l)| l.norm())
        .fold(0.0, f64::max);
    let delta_eig = (1.0 - second_modulus).clamp(0.0, 1.0);
    Ok(SpectrumReport {
        eigenvalues,
        unit_eigenvalue_multiplicity,
        second_modulus,
        delta_eig,
    })
}

/// Verdict of the pole-structure check: for an irreducible aperiodic chain,
/// exactly one eigenvalue at 1 and nothing else near the unit circle.
#[derive(Debug, Clone)]
pub struct PoleVerdict {
    /// Whether the hypothesis (irreducible and aperiodic) holds.
    pub applicable: bool,
    /// Unit multiplicity one and no offending eigenvalues.
    pub pass: bool,
    /// Eigenvalues other than the unit one with modulus `>= 1 - tol`.
    pub offenders: Vec<Complex64>,
}

pub fn check_pole_structure(report: &SpectrumReport, structure: &ChainStructure) -> PoleVerdict {
    let applicable = structure.irreducible && structure.aperiodic;
    let mut offenders = Vec::new();
    let mut skipped_unit = false;
    for l in &report.eigenvalues {
        if !skipped_unit && (*l - Complex64::new(1.0, 0.0)).norm() <= UNIT_EIG_TOL {
            skipped_unit = true;
            continue;
        }
        if l.norm() >= 1.0 - BOUNDARY_TOL {
            offenders.push(*l);
        }
    }
    let pass = report.unit_eigenvalue_multiplicity == 1 && offenders.is_empty();
    PoleVerdict { applicable, pass, offenders }
}

/// Route used to compute the `L2(pi)` spectral gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMethod {
    Eigen,
    Contraction,
    Gelfand,
}

fn require_ergodic(structure: &ChainStructure) -> Result<&DVector<f64>> {
    if !structure.irreducible {
        return Err(Error::NotApplicable("chain is reducible".into()));
    }
    if !structure.aperiodic {
        return Err(Error::NotApplicable(format!(
            "chain is periodic with period {}",
            structure.period
        )));
    }
    structure.stationary()
}

/// The `L2(pi)` spectral gap by the requested route. The contraction value
/// equals the eigen value only for reversible chains; for non-reversible
/// chains it is a separate one-step diagnostic and may be smaller.
pub fn gap_l2(chain: &MarkovChain, method: GapMethod) -> Result<f64> {
    let structure = chain.analyze();
    let pi = require_ergodic(&structure)?.clone();
    match method {
        GapMethod::Eigen => Ok(eigen_spectrum(chain)?.delta_eig),
        GapMethod::Contraction => {
            let q = norms::deviation_kernel(chain, &pi)?;
            // Measures act on the right, so the operator on L2 densities is
            // the transpose of the similarity-transformed kernel; mean-zero
            // measures correspond to the orthogonal complement of sqrt(pi).
            let a = norms::similarity_transform(&q, &pi)?.transpose();
            let n = chain.n();
            let sqrt_pi = DVector::from_fn(n, |i, _| pi[i].sqrt());
            let proj = DMatrix::identity(n, n) - &sqrt_pi * sqrt_pi.transpose();
            let restricted = a * proj;
            Ok((1.0 - norms::largest_singular_value(&restricted)).clamp(0.0, 1.0))
        }
        GapMethod::Gelfand => {
            let q = norms::deviation_kernel(chain, &pi)?;
            let trace = powers::power_norm_trace(&q, GELFAND_N_MAX, |m| {
                norms::op_norm_l2(m, &pi).expect("dimensions fixed")
            });
            match powers::extrapolate_gelfand(&trace, GELFAND_TOL)? {
                GelfandLimit::ExactlyZero => Ok(1.0),
                GelfandLimit::Converged(r) => Ok((1.0 - r).clamp(0.0, 1.0)),
            }
        }
    }
}

/// Result of the Gelfand estimate of the weighted-sup gap.
#[derive(Debug, Clone)]
pub struct GapLvResult {
    pub delta_v: f64,
    /// Full trace of `(n, log |||Q^n|||_V, |||Q^n|||_V^{1/n})`.
    pub trace: Vec<PowerTraceEntry>,
    /// Some power of the deviation kernel is exactly zero.
    pub exact: bool,
}

/// The weighted-sup spectral gap `delta_V` via the Gelfand route on the
/// deviation kernel. On a finite chain the limit equals `|lambda_2|` for
/// every admissible weight (norm-independence of the spectral radius).
pub fn gap_lv(chain: &MarkovChain, v: &Weight, n_max: u64) -> Result<GapLvResult> {
    let structure = chain.analyze();
    let pi = require_ergodic(&structure)?.clone();
    let q = norms::deviation_kernel(chain, &pi)?;
    let trace = powers::power_norm_trace(&q, n_max, |m| {
        norms::op_norm_v(m, v).expect("dimensions fixed")
    });
    match powers::extrapolate_gelfand(&trace, GELFAND_TOL)? {
        GelfandLimit::ExactlyZero => Ok(GapLvResult { delta_v: 1.0, trace, exact: true }),
        GelfandLimit::Converged(r) => Ok(GapLvResult {
            delta_v: (1.0 - r).clamp(0.0, 1.0),
            trace,
            exact: false,
        }),
    }
}

/// One row of the TV-vs-L2 bound check
/// `||mu P^n - pi||_TV <= 1/2 ||mu - pi||_2 (1 - delta_2)^n`.
#[derive(Debug, Clone, Copy)]
pub struct TvBoundRow {
    pub n: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// Slack allowed on the TV bound (pure rounding).
pub const TV_BOUND_SLACK: f64 = 1e-12;

pub fn verify_tv_bound(
    chain: &MarkovChain,
    mu: &DVector<f64>,
    n_max: u64,
) -> Result<Vec<TvBoundRow>> {
    let structure = chain.analyze();
    let pi = require_ergodic(&structure)?.clone();
    if !structure.reversible {
        let mut violation = 0.0f64;
        for x in 0..chain.n() {
            for y in 0..chain.n() {
                violation =
                    violation.max((pi[x] * chain.p()[(x, y)] - pi[y] * chain.p()[(y, x)]).abs());
            }
        }
        return Err(Error::NotReversible { violation });
    }
    if mu.len() != chain.n() {
        return Err(Error::DimensionMismatch { expected: chain.n(), got: mu.len() });
    }
    let delta2 = eigen_spectrum(chain)?.delta_eig;
    let l2_start = match norms::l2_norm_measure(&(mu - &pi), &pi)? {
        norms::L2Norm::Finite(x) => x,
        norms::L2Norm::Infinite => f64::INFINITY,
    };
    let mut rows = Vec::with_capacity(n_max as usize);
    let mut cur = mu.clone();
    for n in 1..=n_max {
        cur = (cur.transpose() * chain.p()).transpose();
        let lhs = norms::tv_norm(&(&cur - &pi));
        let rhs = 0.5 * l2_start * (1.0 - delta2).powi(n as i32);
        rows.push(TvBoundRow { n, lhs, rhs, ok: lhs <= rhs + TV_BOUND_SLACK });
    }
    Ok(rows)
}

/// Report of the uniform-rate check: `(1/n) log G(n) -> log(1 - delta_V)`
/// with `G(n) = |||P^n - 1 (x) pi|||_V`.
#[derive(Debug, Clone)]
pub struct UniformRateReport {
    /// `(n, (1/n) log G(n))` along the doubling schedule.
    pub rates: Vec<(u64, f64)>,
    pub delta_v: f64,
    /// `|(1/n) log G(n) - log(1 - delta_V)|` at the deepest n.
    pub deviation_at_n_max: f64,
    /// `G(n) = 0` exactly from some n on (rank-one `P`); the rate is `-inf`.
    pub exact_rank_one: bool,
}

pub fn verify_uniform_rate(
    chain: &MarkovChain,
    v: &Weight,
    n_max: u64,
) -> Result<UniformRateReport> {
    let lv = gap_lv(chain, v, n_max)?;
    if lv.exact {
        let rates = lv.trace.iter().map(|e| (e.n, f64::NEG_INFINITY)).collect();
        return Ok(UniformRateReport {
            rates,
            delta_v: 1.0,
            deviation_at_n_max: f64::INFINITY,
            exact_rank_one: true,
        });
    }
    if lv.delta_v <= 0.0 {
        return Err(Error::GapZero);
    }
    let rates: Vec<(u64, f64)> =
        lv.trace.iter().map(|e| (e.n, e.log_norm / e.n as f64)).collect();
    let (_, last_rate) = *rates.last().expect("trace nonempty");
    let deviation_at_n_max = (last_rate - (1.0 - lv.delta_v).ln()).abs();
    Ok(UniformRateReport {
        rates,
        delta_v: lv.delta_v,
        deviation_at_n_max,
        exact_rank_one: false,
    })
}
