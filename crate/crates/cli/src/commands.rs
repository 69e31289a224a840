//! Command implementations: each takes the parsed chain plus options and
//! produces a JSON `results` object, optional CSV curve data, and a
//! verdict flag. Input problems and verdict failures are kept apart so
//! the exit-code convention (0 ok / 1 input / 2 verdict) stays mechanical.

use std::path::Path;

use nalgebra::DVector;
use serde_json::{json, Value};

use ergograph_core::chain::MarkovChain;
use ergograph_core::ergodicity::{self, DriftCertificate};
use ergograph_core::lab::{self, VarianceTrend};
use ergograph_core::lyapunov;
use ergograph_core::specfile::ChainSpecFile;
use ergograph_core::spectral::{self, GapMethod};
use ergograph_core::Error as CoreError;

use crate::vectors;

#[derive(Debug)]
pub enum CmdError {
    /// Malformed input or options: exit 1.
    Input(String),
    /// Well-posed request whose mathematical verdict is negative: exit 2.
    Verdict(String),
}

impl From<CoreError> for CmdError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NotSquare { .. }
            | CoreError::NonStochasticRow { .. }
            | CoreError::NegativeEntry { .. }
            | CoreError::DuplicateLabel { .. }
            | CoreError::UnknownFamily { .. }
            | CoreError::MissingParam { .. }
            | CoreError::BadParam { .. }
            | CoreError::EmptyRow { .. }
            | CoreError::DimensionMismatch { .. }
            | CoreError::BadWeight { .. }
            | CoreError::Parse(_) => CmdError::Input(e.to_string()),
            other => CmdError::Verdict(other.to_string()),
        }
    }
}

pub struct CmdOutput {
    pub results: Value,
    pub warnings: Vec<String>,
    /// The report is well-formed but an applicable check failed: exit 2.
    pub verdict_failed: bool,
    /// Curve data for `--csv`, with a documented header line.
    pub csv: Option<String>,
    /// One-paragraph human summary for the pretty printer.
    pub summary: String,
}

impl CmdOutput {
    fn plain(results: Value, summary: String) -> Self {
        CmdOutput { results, warnings: Vec::new(), verdict_failed: false, csv: None, summary }
    }
}

fn vec_json(v: &DVector<f64>) -> Value {
    json!(v.iter().copied().collect::<Vec<f64>>())
}

fn drift_json(d: &DriftCertificate) -> Value {
    json!({
        "c": d.c,
        "delta": d.delta,
        "b": d.b,
        "residual": d.residual,
        "v": d.v.values().iter().copied().collect::<Vec<f64>>(),
    })
}

pub fn validate(chain: &MarkovChain) -> CmdOutput {
    CmdOutput::plain(
        json!({"valid": true, "n": chain.n(), "labels": chain.labels()}),
        format!("valid chain with {} states", chain.n()),
    )
}

pub fn structure(chain: &MarkovChain) -> CmdOutput {
    let s = chain.analyze();
    CmdOutput::plain(
        json!({
            "irreducible": s.irreducible,
            "period": s.period,
            "aperiodic": s.aperiodic,
            "reversible": s.reversible,
            "stationary": s.stationary.as_ref().map(vec_json),
        }),
        format!(
            "irreducible: {}, period: {}, reversible: {}",
            s.irreducible, s.period, s.reversible
        ),
    )
}

pub fn spectrum(chain: &MarkovChain) -> Result<CmdOutput, CmdError> {
    let s = chain.analyze();
    let report = spectral::eigen_spectrum(chain)?;
    let pole = spectral::check_pole_structure(&report, &s);
    let eigs: Vec<[f64; 2]> = report.eigenvalues.iter().map(|l| [l.re, l.im]).collect();
    let offenders: Vec<[f64; 2]> = pole.offenders.iter().map(|l| [l.re, l.im]).collect();
    let verdict_failed = pole.applicable && !pole.pass;
    Ok(CmdOutput {
        results: json!({
            "eigenvalues": eigs,
            "unit_eigenvalue_multiplicity": report.unit_eigenvalue_multiplicity,
            "second_modulus": report.second_modulus,
            "delta_eig": report.delta_eig,
            "pole": {"applicable": pole.applicable, "pass": pole.pass, "offenders": offenders},
        }),
        warnings: Vec::new(),
        verdict_failed,
        csv: None,
        summary: format!(
            "second modulus {:.6}, delta_eig {:.6}, pole check {}",
            report.second_modulus,
            report.delta_eig,
            if !pole.applicable { "n/a" } else if pole.pass { "pass" } else { "FAIL" }
        ),
    })
}

pub fn gap(
    chain: &MarkovChain,
    method: &str,
    v_spec: &str,
    n_max: u64,
    base_dir: &Path,
) -> Result<CmdOutput, CmdError> {
    let (delta, detail) = match method {
        "eigen" => (spectral::gap_l2(chain, GapMethod::Eigen)?, Value::Null),
        "contraction" => (spectral::gap_l2(chain, GapMethod::Contraction)?, Value::Null),
        "gelfand" => {
            let v = vectors::parse_weight(v_spec, chain.n(), base_dir)?;
            let r = spectral::gap_lv(chain, &v, n_max)?;
            (r.delta_v, json!({"exact": r.exact, "trace_depth": r.trace.len()}))
        }
        _ => {
            return Err(CmdError::Input(format!(
                "unknown gap method {method:?} (expected eigen|contraction|gelfand)"
            )))
        }
    };
    Ok(CmdOutput::plain(
        json!({"method": method, "delta": delta, "detail": detail}),
        format!("delta ({method}) = {delta:.9}"),
    ))
}

pub fn drift(
    chain: &MarkovChain,
    v_spec: &str,
    c_spec: &str,
    delta: Option<f64>,
    b: Option<f64>,
    base_dir: &Path,
) -> Result<CmdOutput, CmdError> {
    let v = vectors::parse_weight(v_spec, chain.n(), base_dir)?;
    let c = vectors::parse_state_set(c_spec, chain.n())?;
    let cert = ergodicity::check_drift(chain, &v, &c, delta, b)?;
    let summary = format!(
        "drift holds: delta = {:.9}, b = {:.9}, residual = {:.2e}",
        cert.delta, cert.b, cert.residual
    );
    Ok(CmdOutput::plain(drift_json(&cert), summary))
}

pub fn smallset(
    chain: &MarkovChain,
    c_spec: &str,
    m_max: usize,
) -> Result<CmdOutput, CmdError> {
    let c = vectors::parse_state_set(c_spec, chain.n())?;
    let cert = ergodicity::find_small_set(chain, &c, m_max)?;
    let summary = format!("small set at m = {}, eps = {:.9}", cert.m, cert.eps);
    Ok(CmdOutput::plain(
        json!({"c": cert.c, "m": cert.m, "eps": cert.eps, "nu": vec_json(&cert.nu)}),
        summary,
    ))
}

pub fn certify(
    chain: &MarkovChain,
    v_spec: &str,
    base_dir: &Path,
) -> Result<CmdOutput, CmdError> {
    let v = vectors::parse_weight(v_spec, chain.n(), base_dir)?;
    let r = ergodicity::equivalence_report(chain, &v)?;
    let summary = format!(
        "delta_V = {:.6}, delta_2 = {:.6}, drift {}, consistent: {}",
        r.delta_v,
        r.delta_2,
        if r.drift.is_some() { "found" } else { "absent" },
        r.consistent
    );
    Ok(CmdOutput {
        results: json!({
            "drift": r.drift.as_ref().map(drift_json),
            "delta_v": r.delta_v,
            "delta_2": r.delta_2,
            "reversible": r.reversible,
            "consistent": r.consistent,
        }),
        warnings: Vec::new(),
        verdict_failed: !r.consistent,
        csv: None,
        summary,
    })
}

pub fn synthesize(
    chain: &MarkovChain,
    h_spec: &str,
    base_dir: &Path,
) -> Result<CmdOutput, CmdError> {
    let h = vectors::parse_observable(h_spec, chain, base_dir)?;
    let r = lyapunov::full_synthesis_pipeline(chain, &h)?;
    let s = &r.synthesis;
    let summary = format!(
        "V_h built on C = {:?}: theta = {:.6}, rate = {:.6}, b0 = {:.6}, pi(V_h) = {:.6}",
        s.c,
        s.theta,
        (-s.theta / 2.0).exp(),
        s.b0,
        s.pi_integral
    );
    Ok(CmdOutput::plain(
        json!({
            "c": s.c,
            "theta": s.theta,
            "rate": (-s.theta / 2.0).exp(),
            "v_h": s.v_h.values().iter().copied().collect::<Vec<f64>>(),
            "b0": s.b0,
            "drift": drift_json(&s.drift),
            "pi_integral": s.pi_integral,
            "domination": s.domination,
            "off_c_residual": s.off_c_residual,
            "ladder": {
                "r0": r.ladder.r0,
                "m0": r.ladder.m0,
                "theta_r": r.ladder.theta_r,
                "s_r": r.ladder.s_r,
            },
        }),
        summary,
    ))
}

pub fn simulate(
    chain: &MarkovChain,
    start: usize,
    length: usize,
    seed: u64,
) -> Result<CmdOutput, CmdError> {
    let s = lab::simulate(chain, start, length, seed, 0)?;
    let summary = format!("simulated {length} steps from state {start} (seed {seed})");
    Ok(CmdOutput::plain(serde_json::to_value(&s).expect("serializable"), summary))
}

pub fn autocorr(
    chain: &MarkovChain,
    h_spec: &str,
    n_max: usize,
    base_dir: &Path,
) -> Result<CmdOutput, CmdError> {
    let h = vectors::parse_observable(h_spec, chain, base_dir)?;
    let ac = lab::autocorrelation_exact(chain, &h, n_max)?;
    let mut csv = String::from("n,R,cs_bound\n");
    for (n, (&r, &cs)) in ac.r.iter().zip(ac.cs_bound.iter()).enumerate() {
        csv.push_str(&format!("{n},{r},{cs}\n"));
    }
    let summary = format!(
        "R(0) = {:.6}, sum |R| = {:.6}, fitted rate = {}",
        ac.r[0],
        ac.sum_abs(),
        ac.fitted_rate.map_or("n/a".into(), |r| format!("{r:.6}")),
    );
    Ok(CmdOutput {
        results: json!({
            "r": ac.r,
            "cs_bound": ac.cs_bound,
            "fitted_rate": ac.fitted_rate,
            "sum_abs": ac.sum_abs(),
        }),
        warnings: Vec::new(),
        verdict_failed: false,
        csv: Some(csv),
        summary,
    })
}

pub fn clt(
    chain: &MarkovChain,
    h_spec: &str,
    n_grid_spec: &str,
    replicates: usize,
    seed: u64,
    base_dir: &Path,
) -> Result<CmdOutput, CmdError> {
    let h = vectors::parse_observable(h_spec, chain, base_dir)?;
    let n_grid = vectors::parse_usize_list(n_grid_spec, "n-grid")?;
    let d = lab::partial_sum_diagnostics(chain, &h, &n_grid, replicates, seed)?;
    let mut csv = String::from("n,exact_ESn2,mc_ESn2,mc_se,ks\n");
    for i in 0..d.n_grid.len() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            d.n_grid[i],
            d.exact_second_moment[i],
            d.mc_second_moment[i],
            d.mc_second_moment_se[i],
            d.ks_vs_normal[i]
        ));
    }
    let summary = format!(
        "variance trend: {:?}; E[S(n)^2] at n = {}: {:.6}",
        d.variance_trend,
        d.n_grid.last().unwrap(),
        d.exact_second_moment.last().unwrap()
    );
    Ok(CmdOutput {
        results: serde_json::to_value(&d).expect("serializable"),
        warnings: Vec::new(),
        verdict_failed: false,
        csv: Some(csv),
        summary,
    })
}

pub fn truncation_study(
    spec: &ChainSpecFile,
    n_grid_spec: &str,
    v_rule: &str,
    h_rule: &str,
    boundary_override: Option<ergograph_core::BoundaryPolicy>,
) -> Result<CmdOutput, CmdError> {
    let (family, boundary) = spec.family().ok_or_else(|| {
        CmdError::Input("truncation-study requires a family chain spec".into())
    })?;
    let boundary = boundary_override.unwrap_or(boundary);
    let n_grid = vectors::parse_usize_list(n_grid_spec, "n-grid")?;
    // Validate the rule names eagerly so typos are input errors.
    vectors::weight_rule(v_rule, 2)?;
    if !matches!(h_rule, "zero" | "identity" | "indicator-last") {
        return Err(CmdError::Input(format!("unknown observable rule {h_rule:?}")));
    }
    let v_rule_owned = v_rule.to_string();
    let h_rule_owned = h_rule.to_string();
    let report = lab::truncation_study(
        &family,
        &n_grid,
        &|n| {
            vectors::weight_rule(&v_rule_owned, n).map_err(|e| match e {
                CmdError::Input(m) | CmdError::Verdict(m) => CoreError::Parse(m),
            })
        },
        &|n| match h_rule_owned.as_str() {
            "zero" => DVector::zeros(n),
            "identity" => DVector::from_fn(n, |i, _| i as f64),
            // Uncentered here; autocorrelation centers internally.
            _ => {
                let mut h = DVector::zeros(n);
                h[n - 1] = 1.0;
                h
            }
        },
        boundary,
    );
    let all_failed = report.rows.iter().all(|r| !r.errors.is_empty());
    let mut csv = String::from("N,delta2,delta,b,sum_abs_R\n");
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.n,
            row.delta2.map_or(String::new(), |x| x.to_string()),
            row.drift.as_ref().map_or(String::new(), |d| d.delta.to_string()),
            row.drift.as_ref().map_or(String::new(), |d| d.b.to_string()),
            row.sum_abs_r.map_or(String::new(), |x| x.to_string()),
        ));
    }
    let n_err = report.rows.iter().filter(|r| !r.errors.is_empty()).count();
    let summary = format!(
        "{} truncation rows ({} with errors); delta2 range {:?}",
        report.rows.len(),
        n_err,
        (
            report.rows.iter().filter_map(|r| r.delta2).fold(f64::INFINITY, f64::min),
            report.rows.iter().filter_map(|r| r.delta2).fold(f64::NEG_INFINITY, f64::max),
        )
    );
    Ok(CmdOutput {
        results: serde_json::to_value(&report).expect("serializable"),
        warnings: report
            .rows
            .iter()
            .flat_map(|r| r.errors.iter().map(move |e| format!("N={}: {e}", r.n)))
            .collect(),
        verdict_failed: all_failed,
        csv: Some(csv),
        summary,
    })
}

// ---------------------------------------------------------------------
// report-all

struct CheckRow {
    check: &'static str,
    status: &'static str, // "PASS" | "FAIL" | "N-A"
    detail: String,
}

fn pass(check: &'static str, detail: String) -> CheckRow {
    CheckRow { check, status: "PASS", detail }
}
fn fail(check: &'static str, detail: String) -> CheckRow {
    CheckRow { check, status: "FAIL", detail }
}
fn na(check: &'static str, detail: String) -> CheckRow {
    CheckRow { check, status: "N-A", detail }
}

/// Run every check in the suite on one chain and tabulate the verdicts.
/// Applicable failures set the composite verdict flag.
pub fn report_all(
    chain: &MarkovChain,
    v_spec: &str,
    h_spec: &str,
    mu_spec: &str,
    seed: u64,
    base_dir: &Path,
) -> Result<CmdOutput, CmdError> {
    let v = vectors::parse_weight(v_spec, chain.n(), base_dir)?;
    let mu = vectors::parse_measure(mu_spec, chain.n(), base_dir)?;
    let s = chain.analyze();
    let mut rows: Vec<CheckRow> = Vec::new();

    let ergodic = s.irreducible && s.aperiodic;
    rows.push(if ergodic {
        pass("structure", format!("irreducible, period {}", s.period))
    } else {
        fail(
            "structure",
            format!("irreducible: {}, period: {}", s.irreducible, s.period),
        )
    });

    if !ergodic {
        for check in [
            "pole-structure",
            "gap-consistency",
            "reversible-gap-agreement",
            "tv-bound",
            "uniform-rate",
            "drift-equivalence",
            "synthesis",
            "autocorrelation-cs-bound",
            "clt-diagnostics",
        ] {
            rows.push(na(check, "precondition failed: chain is not ergodic".into()));
        }
        return Ok(finish_report_all(rows, Value::Null));
    }

    let spectrum_report = spectral::eigen_spectrum(chain)?;
    let pole = spectral::check_pole_structure(&spectrum_report, &s);
    rows.push(if pole.pass {
        pass(
            "pole-structure",
            format!("unit multiplicity 1, second modulus {:.6}", spectrum_report.second_modulus),
        )
    } else {
        fail("pole-structure", format!("offenders: {:?}", pole.offenders))
    });

    let delta_eig = spectrum_report.delta_eig;
    let lv = spectral::gap_lv(chain, &v, spectral::GELFAND_N_MAX)?;
    let gap_dev = (lv.delta_v - delta_eig).abs();
    rows.push(if lv.exact || gap_dev <= 1e-3 {
        pass(
            "gap-consistency",
            format!("delta_V = {:.6}, delta_eig = {:.6}", lv.delta_v, delta_eig),
        )
    } else {
        fail("gap-consistency", format!("|delta_V - delta_eig| = {gap_dev:.2e}"))
    });

    if s.reversible {
        let a = spectral::gap_l2(chain, GapMethod::Eigen)?;
        let b = spectral::gap_l2(chain, GapMethod::Contraction)?;
        rows.push(if (a - b).abs() <= 1e-8 {
            pass("reversible-gap-agreement", format!("eigen {a:.9} vs contraction {b:.9}"))
        } else {
            fail("reversible-gap-agreement", format!("|{a:.9} - {b:.9}| > 1e-8"))
        });
        let tv_rows = spectral::verify_tv_bound(chain, &mu, 100)?;
        let violations = tv_rows.iter().filter(|r| !r.ok).count();
        rows.push(if violations == 0 {
            pass("tv-bound", "no violations over n = 1..100".into())
        } else {
            fail("tv-bound", format!("{violations} violations over n = 1..100"))
        });
    } else {
        let detail = "chain is not reversible".to_string();
        rows.push(na("reversible-gap-agreement", detail.clone()));
        rows.push(na("tv-bound", detail));
    }

    let ur = spectral::verify_uniform_rate(chain, &v, 4096)?;
    rows.push(if ur.exact_rank_one {
        pass("uniform-rate", "deviation kernel power vanishes exactly".into())
    } else if ur.deviation_at_n_max <= 0.02 {
        pass(
            "uniform-rate",
            format!("|(1/n) log G(n) - log(1-delta_V)| = {:.2e}", ur.deviation_at_n_max),
        )
    } else {
        fail("uniform-rate", format!("deviation {:.2e} > 0.02", ur.deviation_at_n_max))
    });

    let eq = ergodicity::equivalence_report(chain, &v)?;
    rows.push(if eq.consistent {
        pass(
            "drift-equivalence",
            format!("delta_V = {:.6}, delta_2 = {:.6}", eq.delta_v, eq.delta_2),
        )
    } else {
        fail(
            "drift-equivalence",
            format!(
                "drift {}, delta_V = {:.6}, delta_2 = {:.6}",
                if eq.drift.is_some() { "found" } else { "absent" },
                eq.delta_v,
                eq.delta_2
            ),
        )
    });

    let h = vectors::parse_observable(h_spec, chain, base_dir)?;
    let pipeline = lyapunov::full_synthesis_pipeline(chain, &h)?;
    let syn = &pipeline.synthesis;
    let syn_ok = syn.drift.residual <= 1e-9
        && syn.off_c_residual <= 1e-9
        && syn.domination <= 1.0 + 1e-12
        && syn.pi_integral.is_finite();
    rows.push(if syn_ok {
        pass(
            "synthesis",
            format!(
                "theta = {:.6}, |C| = {}, residuals <= 1e-9, pi(V_h) = {:.6}",
                syn.theta,
                syn.c.len(),
                syn.pi_integral
            ),
        )
    } else {
        fail(
            "synthesis",
            format!(
                "drift residual {:.2e}, off-C residual {:.2e}, domination {:.6}",
                syn.drift.residual, syn.off_c_residual, syn.domination
            ),
        )
    });

    let ac = lab::autocorrelation_exact(chain, &h, 100)?;
    let cs_violations = (0..=100)
        .filter(|&k| ac.r[k].abs() > ac.cs_bound[k] + 1e-12)
        .count();
    rows.push(if cs_violations == 0 {
        pass("autocorrelation-cs-bound", "|R(n)| <= CS bound for n <= 100".into())
    } else {
        fail("autocorrelation-cs-bound", format!("{cs_violations} violations"))
    });

    let delta2 = delta_eig;
    let grid = [64usize, 128, 256, 512];
    let d = lab::partial_sum_diagnostics(chain, &h, &grid, 2000, seed)?;
    let rate_ok = ac.fitted_rate.map_or(true, |r| r <= (1.0 - delta2) + 1e-2);
    let trend_ok = d.variance_trend == VarianceTrend::Bounded;
    rows.push(if rate_ok && trend_ok {
        pass(
            "clt-diagnostics",
            format!(
                "fitted rate {} <= 1 - delta_2 + 1e-2, variance trend bounded",
                ac.fitted_rate.map_or("n/a".into(), |r| format!("{r:.6}"))
            ),
        )
    } else {
        fail(
            "clt-diagnostics",
            format!(
                "fitted rate {:?} vs 1 - delta_2 = {:.6}, trend {:?}",
                ac.fitted_rate,
                1.0 - delta2,
                d.variance_trend
            ),
        )
    });

    let details = json!({
        "delta_eig": delta_eig,
        "delta_v": lv.delta_v,
        "theta": syn.theta,
        "c": syn.c,
        "pi_v_h": syn.pi_integral,
        "sum_abs_r": ac.sum_abs(),
        "exact_second_moment": d.exact_second_moment,
        "variance_trend": serde_json::to_value(d.variance_trend).expect("serializable"),
    });
    Ok(finish_report_all(rows, details))
}

fn finish_report_all(rows: Vec<CheckRow>, details: Value) -> CmdOutput {
    let verdict_failed = rows.iter().any(|r| r.status == "FAIL");
    let mut summary = String::new();
    for r in &rows {
        summary.push_str(&format!("{:<26} {:<4} {}\n", r.check, r.status, r.detail));
    }
    let checks: Vec<Value> = rows
        .iter()
        .map(|r| json!({"check": r.check, "status": r.status, "detail": r.detail}))
        .collect();
    CmdOutput {
        results: json!({"checks": checks, "details": details}),
        warnings: Vec::new(),
        verdict_failed,
        csv: None,
        summary: summary.trim_end().to_string(),
    }
}
