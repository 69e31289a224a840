//! Constructive Lyapunov synthesis from an `L2` spectral gap.
//!
//! The construction runs entirely through hitting-time functionals of a
//! target set `C`, each an exact linear solve against the taboo kernel
//! `Q_C(x,y) = P(x,y) 1{y not in C}`:
//!
//! - exponential return moments `U(x) = E_x[exp(theta tau_C)]`, feasible
//!   whenever `exp(theta) rho(Q_C) < 1`,
//! - `h^2`-regularity sums `E_x[sum_{n<=tau_S} h^2(X(n))]`,
//! - the synthesized weight
//!   `V_h(x) = E_x[sum_{n=0}^{sigma_C} (1 + |h(X(n))|) exp(theta n / 2)]`,
//!   which satisfies `P V_h <= exp(-theta/2) V_h + b0 1_C` with equality
//!   off `C`: `exp(theta/2) P V_h(x) = V_h(x) - (1 + |h(x)|)`.
//!
//! Target sets are picked by a ladder of sublevel sets of the computed
//! functionals; every returned certificate is re-verified pointwise.

use nalgebra::{DMatrix, DVector};

use crate::chain::MarkovChain;
use crate::ergodicity::{self, DriftCertificate};
use crate::error::{Error, Result};
use crate::norms::{self, Weight};

/// Safety factor for the synthesis rate: `theta = 0.9 (-log rho(Q_C))`,
/// so `exp(theta) rho = rho^{0.1} < 1`.
pub const THETA_SAFETY: f64 = 0.9;
/// Safety factor for the per-rung Kendall moments in the ladder.
pub const LADDER_THETA_SAFETY: f64 = 0.45;
/// Cap on theta when the taboo radius is 0 (or extremely small).
pub const THETA_CAP: f64 = 10.0;
/// Residual tolerance on the verified drift and off-C identities.
pub const SYNTH_TOL: f64 = 1e-9;

fn complement(c: &[usize], n: usize) -> Vec<usize> {
    let mut in_c = vec![false; n];
    for &x in c {
        in_c[x] = true;
    }
    (0..n).filter(|&x| !in_c[x]).collect()
}

/// Spectral radius of the taboo kernel `Q_C` (the transition matrix
/// restricted to rows and columns outside `C`). Strictly below 1 for an
/// irreducible chain with nonempty `C`; 0 when `C` covers everything.
pub fn taboo_radius(chain: &MarkovChain, c: &[usize]) -> Result<f64> {
    let n = chain.n();
    let comp = complement(c, n);
    if comp.is_empty() {
        return Ok(0.0);
    }
    let k = comp.len();
    let sub = DMatrix::from_fn(k, k, |i, j| chain.p()[(comp[i], comp[j])]);
    let radius = sub
        .complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max);
    if radius >= 1.0 - 1e-9 {
        return Err(Error::AbsorbingComplement { radius });
    }
    Ok(radius)
}

/// Solve the off-C system `(I - beta Q_off) w = rhs` by dense LU with one
/// iterative-refinement pass when the residual warrants it.
fn solve_off_c(
    chain: &MarkovChain,
    comp: &[usize],
    beta: f64,
    rhs: &DVector<f64>,
) -> Result<DVector<f64>> {
    let k = comp.len();
    let mut a = DMatrix::from_fn(k, k, |i, j| -beta * chain.p()[(comp[i], comp[j])]);
    for i in 0..k {
        a[(i, i)] += 1.0;
    }
    let lu = a.clone().lu();
    let mut w = lu.solve(rhs).ok_or(Error::SingularSystem)?;
    let resid = rhs - &a * &w;
    if resid.amax() > 1e-10 {
        if let Some(dw) = lu.solve(&resid) {
            w += dw;
        }
    }
    Ok(w)
}

/// `E_x[sum_{n=0}^{sigma_C} g(X(n)) beta^n]` for every start `x`; equals
/// `g` on `C` (where `sigma_C = 0`). Requires `beta rho(Q_C) < 1`.
pub fn discounted_hitting_sum(
    chain: &MarkovChain,
    c: &[usize],
    g: &DVector<f64>,
    beta: f64,
) -> Result<DVector<f64>> {
    let n = chain.n();
    if g.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: g.len() });
    }
    let radius = taboo_radius(chain, c)?;
    if beta * radius >= 1.0 {
        return Err(Error::ThetaTooLarge { product: beta * radius });
    }
    let comp = complement(c, n);
    let in_c = {
        let mut m = vec![false; n];
        for &x in c {
            m[x] = true;
        }
        m
    };
    let mut out = DVector::zeros(n);
    for &x in c {
        out[x] = g[x];
    }
    if comp.is_empty() {
        return Ok(out);
    }
    // rhs(x) = g(x) + beta * sum_{y in C} P(x,y) g(y), x off C.
    let rhs = DVector::from_fn(comp.len(), |i, _| {
        let x = comp[i];
        let inflow: f64 = (0..n)
            .filter(|&y| in_c[y])
            .map(|y| chain.p()[(x, y)] * g[y])
            .sum();
        g[x] + beta * inflow
    });
    let w = solve_off_c(chain, &comp, beta, &rhs)?;
    for (i, &x) in comp.iter().enumerate() {
        out[x] = w[i];
    }
    Ok(out)
}

/// `E_x[sigma_C]`: expected number of steps to hit `C` (0 on `C`).
pub fn mean_hitting_time(chain: &MarkovChain, c: &[usize]) -> Result<DVector<f64>> {
    let ones = DVector::from_element(chain.n(), 1.0);
    let w = discounted_hitting_sum(chain, c, &ones, 1.0)?;
    Ok(w.map(|x| x - 1.0))
}

/// Exponential return moments `U(x) = E_x[exp(theta tau_C)]`, with the
/// uniform bound over `C` reported separately.
#[derive(Debug, Clone)]
pub struct ExpMoment {
    pub u: DVector<f64>,
    pub max_on_c: f64,
}

/// Solve the return-time system: first `M(y) = E_y[exp(theta sigma_C)]`
/// (1 on `C`), then one transition step `U = exp(theta) P M`.
pub fn exponential_moment(chain: &MarkovChain, c: &[usize], theta: f64) -> Result<ExpMoment> {
    let n = chain.n();
    let beta = theta.exp();
    let radius = taboo_radius(chain, c)?;
    if beta * radius >= 1.0 {
        return Err(Error::ThetaTooLarge { product: beta * radius });
    }
    let comp = complement(c, n);
    let in_c = {
        let mut m = vec![false; n];
        for &x in c {
            m[x] = true;
        }
        m
    };
    let mut hit = DVector::from_element(n, 1.0);
    if !comp.is_empty() {
        let rhs = DVector::from_fn(comp.len(), |i, _| {
            let x = comp[i];
            let inflow: f64 = (0..n).filter(|&y| in_c[y]).map(|y| chain.p()[(x, y)]).sum();
            beta * inflow
        });
        let m_off = solve_off_c(chain, &comp, beta, &rhs)?;
        for (i, &x) in comp.iter().enumerate() {
            hit[x] = m_off[i];
        }
    }
    let u = beta * (chain.p() * hit);
    let max_on_c = c.iter().map(|&x| u[x]).fold(0.0, f64::max);
    Ok(ExpMoment { u, max_on_c })
}

/// Return-time `h^2`-regularity functional
/// `V_r(x) = E_x[sum_{n=0}^{tau_S} h^2(X(n))]`.
pub fn h2_regular_functional(
    chain: &MarkovChain,
    s: &[usize],
    h: &DVector<f64>,
) -> Result<DVector<f64>> {
    let h2 = h.map(|x| x * x);
    let m = discounted_hitting_sum(chain, s, &h2, 1.0)?;
    Ok(&h2 + chain.p() * m)
}

/// One rung of the regular-set ladder, with the chosen `(r0, m0)` set.
#[derive(Debug, Clone)]
pub struct RegularSetLadder {
    pub r0: usize,
    pub m0: f64,
    /// `h^2`-regular target set of the chosen rung.
    pub s_r: Vec<usize>,
    /// Kendall target set of the chosen rung (same sublevel construction).
    pub k_r: Vec<usize>,
    pub theta_r: f64,
    pub u_r: DVector<f64>,
    pub v_r: DVector<f64>,
    /// `C = {x : U_r(x) + V_r(x) <= m0}`.
    pub c_set: Vec<usize>,
}

/// Default m-schedule `2, 4, ..., 2^14`.
pub fn default_m_schedule() -> Vec<f64> {
    (1..=14).map(|k| f64::powi(2.0, k)).collect()
}

/// Build the ladder: rungs are sublevel sets (in mean-hitting-time order to
/// the most likely state) growing to the whole space; the first `(r, m)`
/// with a nonempty `C_{r,m}` is chosen.
pub fn build_ladder(
    chain: &MarkovChain,
    h: &DVector<f64>,
    r_rungs: usize,
    m_schedule: &[f64],
) -> Result<RegularSetLadder> {
    let n = chain.n();
    if h.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: h.len() });
    }
    let structure = chain.analyze();
    if !structure.irreducible || !structure.aperiodic {
        return Err(Error::NotApplicable(
            "ladder construction requires an irreducible aperiodic chain".into(),
        ));
    }
    let pi = structure.stationary()?;
    let pivot = (0..n)
        .max_by(|&a, &b| pi[a].partial_cmp(&pi[b]).unwrap())
        .unwrap_or(0);
    let t = mean_hitting_time(chain, &[pivot])?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| t[a].partial_cmp(&t[b]).unwrap().then(a.cmp(&b)));

    let mut min_score = f64::INFINITY;
    for r in 1..=r_rungs.max(1) {
        let size = (n * r).div_ceil(r_rungs.max(1)).max(1);
        let mut set: Vec<usize> = order[..size.min(n)].to_vec();
        set.sort_unstable();
        let radius = taboo_radius(chain, &set)?;
        let theta_r = if radius > 0.0 {
            (LADDER_THETA_SAFETY * -radius.ln()).min(THETA_CAP)
        } else {
            THETA_CAP
        };
        let u_r = exponential_moment(chain, &set, theta_r)?.u;
        let v_r = h2_regular_functional(chain, &set, h)?;
        for &m in m_schedule {
            let c_set: Vec<usize> = (0..n).filter(|&x| u_r[x] + v_r[x] <= m).collect();
            for x in 0..n {
                min_score = min_score.min(u_r[x] + v_r[x]);
            }
            if !c_set.is_empty() {
                return Ok(RegularSetLadder {
                    r0: r,
                    m0: m,
                    s_r: set.clone(),
                    k_r: set,
                    theta_r,
                    u_r,
                    v_r,
                    c_set,
                });
            }
        }
    }
    Err(Error::LadderExhausted {
        diagnostics: format!(
            "min U_r + V_r over all rungs = {min_score}, above the largest m in the schedule"
        ),
    })
}

/// The synthesized Lyapunov function with its verified drift data.
#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub v_h: Weight,
    pub c: Vec<usize>,
    pub theta: f64,
    /// Verified certificate at rate `1 - delta = exp(-theta/2)`.
    pub drift: DriftCertificate,
    pub b0: f64,
    /// `pi(V_h)`.
    pub pi_integral: f64,
    /// `||h||_{V_h}`, at most 1 by construction.
    pub domination: f64,
    /// `max_{x not in C} |exp(theta/2) P V_h(x) - (V_h(x) - 1 - |h(x)|)|`,
    /// relative to `V_h(x)`.
    pub off_c_residual: f64,
}

/// Build `V_h` by the exact off-C solve and verify the drift inequality,
/// the off-C identity, domination of `h`, and `pi`-integrability.
pub fn synthesize_vh(
    chain: &MarkovChain,
    h: &DVector<f64>,
    c: &[usize],
    theta: f64,
) -> Result<SynthesisResult> {
    let n = chain.n();
    if h.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: h.len() });
    }
    if c.is_empty() {
        return Err(Error::NotApplicable("synthesis target C is empty".into()));
    }
    let structure = chain.analyze();
    let pi = structure
        .stationary()
        .map_err(|_| Error::NotApplicable("chain is reducible".into()))?
        .clone();
    let beta = (theta / 2.0).exp();
    let g = h.map(|x| 1.0 + x.abs());
    let v_h = discounted_hitting_sum(chain, c, &g, beta)?;

    let in_c = {
        let mut m = vec![false; n];
        for &x in c {
            m[x] = true;
        }
        m
    };
    let pv = chain.p() * &v_h;
    let rate = (-theta / 2.0).exp();
    let b0 = c
        .iter()
        .map(|&x| (pv[x] - rate * v_h[x]).max(0.0))
        .fold(0.0, f64::max);
    let mut off_c_residual = 0.0f64;
    for x in 0..n {
        if !in_c[x] {
            let dev = (beta * pv[x] - (v_h[x] - g[x])).abs() / v_h[x].max(1.0);
            off_c_residual = off_c_residual.max(dev);
        }
    }
    let weight = Weight::new(v_h.clone())
        .map_err(|_| Error::DriftVerificationFailed { residual: f64::NAN })?;
    let drift = ergodicity::check_drift(chain, &weight, c, Some(1.0 - rate), Some(b0))
        .map_err(|e| match e {
            Error::DriftFails { ratio, .. } => Error::DriftVerificationFailed { residual: ratio },
            other => other,
        })?;
    if off_c_residual > SYNTH_TOL {
        return Err(Error::DriftVerificationFailed { residual: off_c_residual });
    }
    let pi_integral = pi.dot(&v_h);
    let domination = norms::v_norm_function(h, &weight)?;
    Ok(SynthesisResult {
        v_h: weight,
        c: c.to_vec(),
        theta,
        drift,
        b0,
        pi_integral,
        domination,
        off_c_residual,
    })
}

/// Cauchy-Schwarz accounting for the finiteness bound on the `h`-part of
/// `V_h`: pointwise, `h_term_sq <= h2_sum * exp_sum`.
#[derive(Debug, Clone)]
pub struct CauchySchwarzBound {
    /// `(E_x[sum |h| exp(theta n / 2)])^2 = (V_h - E_x[sum exp(theta n/2)])^2`.
    pub h_term_sq: DVector<f64>,
    /// `E_x[sum_{n<=sigma_C} h^2(X(n))]`.
    pub h2_sum: DVector<f64>,
    /// `E_x[sum_{n<=sigma_C} exp(theta n)]`.
    pub exp_sum: DVector<f64>,
    /// Kendall moments of the chosen rung, for reference.
    pub u_r0: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub ladder: RegularSetLadder,
    pub synthesis: SynthesisResult,
    pub cauchy_schwarz: CauchySchwarzBound,
}

/// Ladder -> theta selection -> synthesis, with the finiteness bound
/// attached and all three conclusions verified.
pub fn full_synthesis_pipeline(chain: &MarkovChain, h: &DVector<f64>) -> Result<PipelineResult> {
    let ladder = build_ladder(chain, h, 8, &default_m_schedule())?;
    let c = ladder.c_set.clone();
    let radius = taboo_radius(chain, &c)?;
    let theta = if radius > 0.0 {
        (THETA_SAFETY * -radius.ln()).min(THETA_CAP)
    } else {
        THETA_CAP
    };
    let synthesis = synthesize_vh(chain, h, &c, theta)?;

    let ones = DVector::from_element(chain.n(), 1.0);
    let base_sum = discounted_hitting_sum(chain, &c, &ones, (theta / 2.0).exp())?;
    let h2 = h.map(|x| x * x);
    let h2_sum = discounted_hitting_sum(chain, &c, &h2, 1.0)?;
    let exp_sum = discounted_hitting_sum(chain, &c, &ones, theta.exp())?;
    let h_term_sq = DVector::from_fn(chain.n(), |x, _| {
        let d = synthesis.v_h.values()[x] - base_sum[x];
        d * d
    });
    let u_r0 = ladder.u_r.clone();
    Ok(PipelineResult {
        ladder,
        synthesis,
        cauchy_schwarz: CauchySchwarzBound { h_term_sq, h2_sum, exp_sum, u_r0 },
    })
}
