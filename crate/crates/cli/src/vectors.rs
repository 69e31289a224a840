//! Parsing of vector-valued command-line arguments.
//!
//! A vector argument is one of: a named rule (`one`, `pow2`, `linear`,
//! `geometric:<base>` for weights; `zero`, `identity`, `indicator-last`
//! for observables; `delta:<i>`, `uniform` for measures), `@<path>` to a
//! JSON vector file, or an inline JSON array.

use std::path::Path;

use nalgebra::DVector;

use ergograph_core::chain::MarkovChain;
use ergograph_core::norms::Weight;
use ergograph_core::specfile::VectorFile;

use crate::commands::CmdError;

fn input(msg: impl Into<String>) -> CmdError {
    CmdError::Input(msg.into())
}

fn load_file(spec: &str, base_dir: &Path) -> Result<VectorFile, CmdError> {
    let path = base_dir.join(&spec[1..]);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| input(format!("cannot read vector file {}: {e}", path.display())))?;
    VectorFile::parse(&text).map_err(|e| input(e.to_string()))
}

fn inline_array(spec: &str) -> Result<Vec<f64>, CmdError> {
    serde_json::from_str(spec).map_err(|e| input(format!("inline vector: {e}")))
}

fn check_len(values: Vec<f64>, n: usize, what: &str) -> Result<DVector<f64>, CmdError> {
    if values.len() != n {
        return Err(input(format!(
            "{what} has length {}, chain has {n} states",
            values.len()
        )));
    }
    Ok(DVector::from_vec(values))
}

/// A weight rule by name, usable at any truncation size.
pub fn weight_rule(rule: &str, n: usize) -> Result<Weight, CmdError> {
    let v = match rule {
        "one" => Weight::ones(n),
        "pow2" => Weight::geometric(n, 2.0).map_err(|e| input(e.to_string()))?,
        "linear" => Weight::linear(n),
        _ => match rule.strip_prefix("geometric:") {
            Some(base) => {
                let b: f64 = base
                    .parse()
                    .map_err(|_| input(format!("bad geometric base {base:?}")))?;
                Weight::geometric(n, b).map_err(|e| input(e.to_string()))?
            }
            None => {
                return Err(input(format!(
                    "unknown weight rule {rule:?} (expected one|pow2|linear|geometric:<b>)"
                )))
            }
        },
    };
    Ok(v)
}

/// Resolve a `--V` argument against a concrete chain.
pub fn parse_weight(spec: &str, n: usize, base_dir: &Path) -> Result<Weight, CmdError> {
    if spec.starts_with('@') {
        let file = load_file(spec, base_dir)?;
        let values = file.v.ok_or_else(|| input("vector file has no \"V\" field"))?;
        return Weight::new(check_len(values, n, "V")?).map_err(|e| input(e.to_string()));
    }
    if spec.starts_with('[') {
        return Weight::new(check_len(inline_array(spec)?, n, "V")?)
            .map_err(|e| input(e.to_string()));
    }
    weight_rule(spec, n)
}

/// An observable rule by name. `indicator-last` is centered under the
/// chain's stationary distribution.
pub fn observable_rule(rule: &str, chain: &MarkovChain) -> Result<DVector<f64>, CmdError> {
    let n = chain.n();
    match rule {
        "zero" => Ok(DVector::zeros(n)),
        "identity" => Ok(DVector::from_fn(n, |i, _| i as f64)),
        "indicator-last" => {
            let structure = chain.analyze();
            let pi = structure
                .stationary()
                .map_err(|e| CmdError::Verdict(e.to_string()))?;
            let mut h = DVector::from_element(n, -pi[n - 1]);
            h[n - 1] += 1.0;
            Ok(h)
        }
        _ => Err(input(format!(
            "unknown observable rule {rule:?} (expected zero|identity|indicator-last)"
        ))),
    }
}

/// Resolve an `--h` argument against a concrete chain.
pub fn parse_observable(
    spec: &str,
    chain: &MarkovChain,
    base_dir: &Path,
) -> Result<DVector<f64>, CmdError> {
    if spec.starts_with('@') {
        let file = load_file(spec, base_dir)?;
        let values = file.h.ok_or_else(|| input("vector file has no \"h\" field"))?;
        return check_len(values, chain.n(), "h");
    }
    if spec.starts_with('[') {
        return check_len(inline_array(spec)?, chain.n(), "h");
    }
    observable_rule(spec, chain)
}

/// Resolve a `--mu` argument (a probability distribution over states).
pub fn parse_measure(spec: &str, n: usize, base_dir: &Path) -> Result<DVector<f64>, CmdError> {
    let mu = if spec.starts_with('@') {
        let file = load_file(spec, base_dir)?;
        let values = file.mu.ok_or_else(|| input("vector file has no \"mu\" field"))?;
        check_len(values, n, "mu")?
    } else if spec.starts_with('[') {
        check_len(inline_array(spec)?, n, "mu")?
    } else if spec == "uniform" {
        DVector::from_element(n, 1.0 / n as f64)
    } else if let Some(i) = spec.strip_prefix("delta:") {
        let i: usize = i.parse().map_err(|_| input(format!("bad delta index {i:?}")))?;
        if i >= n {
            return Err(input(format!("delta index {i} out of range for {n} states")));
        }
        let mut mu = DVector::zeros(n);
        mu[i] = 1.0;
        mu
    } else {
        return Err(input(format!(
            "unknown measure {spec:?} (expected uniform|delta:<i>|@file|inline JSON)"
        )));
    };
    let total: f64 = mu.iter().sum();
    if mu.iter().any(|&x| x < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(input("mu must be a probability distribution"));
    }
    Ok(mu)
}

/// Parse a comma-separated state index list (`--C 0,1,2`).
pub fn parse_state_set(spec: &str, n: usize) -> Result<Vec<usize>, CmdError> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let i: usize = part
            .parse()
            .map_err(|_| input(format!("bad state index {part:?}")))?;
        if i >= n {
            return Err(input(format!("state index {i} out of range for {n} states")));
        }
        out.push(i);
    }
    if out.is_empty() {
        return Err(input("state set is empty"));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Parse a comma-separated list of positive integers (`--n-grid 64,128`).
pub fn parse_usize_list(spec: &str, what: &str) -> Result<Vec<usize>, CmdError> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let v: usize = part
            .parse()
            .map_err(|_| input(format!("bad {what} entry {part:?}")))?;
        if v == 0 {
            return Err(input(format!("{what} entries must be positive")));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(input(format!("{what} is empty")));
    }
    Ok(out)
}
