//! Finite-state Markov chains: validation, structural analysis, and
//! truncation of countable chain families.
//!
//! A [`MarkovChain`] wraps a validated row-stochastic matrix. Structure
//! (irreducibility, period, reversibility, stationary distribution) is
//! computed by [`MarkovChain::analyze`]; the stationary distribution is
//! obtained by a dense linear solve of `pi P = pi` with a normalization row,
//! not by spectral machinery.

use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Default tolerance for row-stochasticity checks.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default tolerance for the detailed-balance scan.
pub const DEFAULT_DB_TOL: f64 = 1e-8;

/// A validated finite-state Markov chain.
///
/// Invariants enforced at construction: every entry of `P` lies in `[0,1]`
/// (entries within `tol` of the range are clamped), every row sums to 1
/// within `tol`, and labels are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    labels: Vec<String>,
    p: DMatrix<f64>,
    tol: f64,
}

impl MarkovChain {
    /// Validate a raw transition matrix into a chain.
    pub fn validate(raw: DMatrix<f64>, labels: Vec<String>, tol: f64) -> Result<Self> {
        let n = raw.nrows();
        if raw.ncols() != n {
            return Err(Error::NotSquare { rows: raw.nrows(), cols: raw.ncols() });
        }
        if n == 0 {
            return Err(Error::NotSquare { rows: 0, cols: 0 });
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.clone()) {
                return Err(Error::DuplicateLabel { label: l.clone() });
            }
        }
        let mut p = raw;
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let v = p[(i, j)];
                if v < -tol {
                    return Err(Error::NegativeEntry { row: i, col: j, value: v });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > tol {
                return Err(Error::NonStochasticRow { row: i, sum, tol });
            }
            // Clamp entries that are within tol of [0,1].
            for j in 0..n {
                let v = p[(i, j)];
                if v < 0.0 {
                    p[(i, j)] = 0.0;
                } else if v > 1.0 {
                    p[(i, j)] = 1.0;
                }
            }
        }
        Ok(MarkovChain { labels, p, tol })
    }

    /// Convenience constructor with numeric labels `"0".."n-1"` and the
    /// default tolerance.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::NotSquare { rows: n, cols: r.len() });
            }
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let m = DMatrix::from_row_slice(n, n, &flat);
        let labels = (0..n).map(|i| i.to_string()).collect();
        MarkovChain::validate(m, labels, DEFAULT_TOL)
    }

    /// The two-state chain `[[1-a, a], [b, 1-b]]`, a standard test fixture
    /// with stationary distribution `(b, a)/(a+b)`.
    pub fn two_state(a: f64, b: f64) -> Self {
        MarkovChain::from_rows(&[vec![1.0 - a, a], vec![b, 1.0 - b]])
            .expect("two_state parameters out of range")
    }

    /// Lazy cyclic shift on three states: `lazy * I + (1 - lazy) * shift`.
    /// Doubly stochastic (uniform stationary) and non-reversible.
    pub fn three_cycle(lazy: f64) -> Self {
        let s = 1.0 - lazy;
        MarkovChain::from_rows(&[
            vec![lazy, s, 0.0],
            vec![0.0, lazy, s],
            vec![s, 0.0, lazy],
        ])
        .expect("three_cycle parameter out of range")
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Structural analysis: strong connectivity, period, stationary
    /// distribution, reversibility. Pure and idempotent; a reducible chain
    /// yields `irreducible == false` with `stationary == None` rather than
    /// an error.
    pub fn analyze(&self) -> ChainStructure {
        self.analyze_with_db_tol(DEFAULT_DB_TOL)
    }

    pub fn analyze_with_db_tol(&self, db_tol: f64) -> ChainStructure {
        let n = self.n();
        let irreducible = self.strongly_connected();
        let period = self.period();
        let aperiodic = period == 1;
        let stationary = if irreducible { self.solve_stationary() } else { None };
        let reversible = match &stationary {
            Some(pi) => {
                let mut worst = 0.0f64;
                for x in 0..n {
                    for y in (x + 1)..n {
                        let d = (pi[x] * self.p[(x, y)] - pi[y] * self.p[(y, x)]).abs();
                        worst = worst.max(d);
                    }
                }
                worst <= db_tol
            }
            None => false,
        };
        ChainStructure { irreducible, period, aperiodic, reversible, stationary }
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut adj = vec![Vec::new(); n];
        for x in 0..n {
            for y in 0..n {
                if self.p[(x, y)] > 0.0 {
                    adj[x].push(y);
                }
            }
        }
        adj
    }

    fn strongly_connected(&self) -> bool {
        let n = self.n();
        let adj = self.adjacency();
        let mut radj = vec![Vec::new(); n];
        for (x, ys) in adj.iter().enumerate() {
            for &y in ys {
                radj[y].push(x);
            }
        }
        reachable_count(&adj, 0) == n && reachable_count(&radj, 0) == n
    }

    /// Period of the communicating class of state 0, via BFS layering:
    /// gcd of `level(x) + 1 - level(y)` over edges `x -> y` within the class.
    fn period(&self) -> usize {
        let n = self.n();
        let adj = self.adjacency();
        let mut radj = vec![Vec::new(); n];
        for (x, ys) in adj.iter().enumerate() {
            for &y in ys {
                radj[y].push(x);
            }
        }
        let fwd = reachable_set(&adj, 0);
        let bwd = reachable_set(&radj, 0);
        let in_class: Vec<bool> = (0..n).map(|i| fwd[i] && bwd[i]).collect();

        let mut level = vec![usize::MAX; n];
        level[0] = 0;
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(x) = queue.pop_front() {
            for &y in &adj[x] {
                if in_class[y] && level[y] == usize::MAX {
                    level[y] = level[x] + 1;
                    queue.push_back(y);
                }
            }
        }
        let mut g: i64 = 0;
        for x in 0..n {
            if !in_class[x] || level[x] == usize::MAX {
                continue;
            }
            for &y in &adj[x] {
                if in_class[y] && level[y] != usize::MAX {
                    let d = level[x] as i64 + 1 - level[y] as i64;
                    g = gcd(g, d.abs());
                }
            }
        }
        if g == 0 {
            1
        } else {
            g as usize
        }
    }

    /// Stationary distribution by solving `(P^T - I) pi = 0` with the last
    /// equation replaced by the normalization `sum pi = 1`, dense LU with
    /// partial pivoting.
    fn solve_stationary(&self) -> Option<DVector<f64>> {
        let n = self.n();
        let mut a = self.p.transpose() - DMatrix::<f64>::identity(n, n);
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let lu = a.lu();
        let mut pi = lu.solve(&b)?;
        // Scrub tiny negative round-off and renormalize.
        for x in pi.iter_mut() {
            if *x < 0.0 && *x > -1e-12 {
                *x = 0.0;
            }
        }
        let s: f64 = pi.iter().sum();
        if s <= 0.0 {
            return None;
        }
        pi /= s;
        Some(pi)
    }
}

fn reachable_count(adj: &[Vec<usize>], root: usize) -> usize {
    reachable_set(adj, root).iter().filter(|&&b| b).count()
}

fn reachable_set(adj: &[Vec<usize>], root: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    seen[root] = true;
    let mut stack = vec![root];
    while let Some(x) = stack.pop() {
        for &y in &adj[x] {
            if !seen[y] {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Result of [`MarkovChain::analyze`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStructure {
    pub irreducible: bool,
    pub period: usize,
    pub aperiodic: bool,
    pub reversible: bool,
    /// Present exactly when the chain is irreducible.
    pub stationary: Option<DVector<f64>>,
}

impl ChainStructure {
    /// Stationary distribution, or a `Reducible` error when absent.
    pub fn stationary(&self) -> Result<&DVector<f64>> {
        self.stationary
            .as_ref()
            .ok_or_else(|| Error::Reducible("stationary distribution requested".into()))
    }
}

/// Boundary handling when truncating a countable chain to `{0..N-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Out-of-range mass is added to state `N-1`; preserves stochasticity
    /// exactly, the default.
    ReflectToLast,
    /// The in-range part of the row is rescaled to sum to 1.
    RenormalizeRow,
}

/// A countable-state chain given by a named row builder plus parameters.
///
/// Families:
/// - `birth_death` with params `p`, `q`: up-step `p`, down-step `q`,
///   hold `1-p-q`; state 0 holds with probability `1-p`.
/// - `two_state` with params `a`, `b`: the two-state chain
///   `[[1-a, a], [b, 1-b]]`, lifted to the nonnegative integers by sending
///   every state `>= 2` to state 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CountableChainSpec {
    pub family: String,
    pub params: BTreeMap<String, f64>,
}

impl CountableChainSpec {
    pub fn new(family: &str, params: &[(&str, f64)]) -> Self {
        CountableChainSpec {
            family: family.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn birth_death(p: f64, q: f64) -> Self {
        Self::new("birth_death", &[("p", p), ("q", q)])
    }

    fn param(&self, name: &str) -> Result<f64> {
        self.params.get(name).copied().ok_or_else(|| Error::MissingParam {
            family: self.family.clone(),
            param: name.to_string(),
        })
    }

    /// The finitely supported row of state `x`, as `(state, prob)` pairs.
    pub fn row(&self, x: usize) -> Result<Vec<(usize, f64)>> {
        match self.family.as_str() {
            "birth_death" => {
                let p = self.param("p")?;
                let q = self.param("q")?;
                if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) || p + q > 1.0 {
                    return Err(Error::BadParam {
                        family: self.family.clone(),
                        reason: format!("need p, q >= 0 with p + q <= 1, got p={p}, q={q}"),
                    });
                }
                if x == 0 {
                    Ok(vec![(0, 1.0 - p), (1, p)])
                } else {
                    Ok(vec![(x - 1, q), (x, 1.0 - p - q), (x + 1, p)])
                }
            }
            "two_state" => {
                let a = self.param("a")?;
                let b = self.param("b")?;
                match x {
                    0 => Ok(vec![(0, 1.0 - a), (1, a)]),
                    1 => Ok(vec![(0, b), (1, 1.0 - b)]),
                    _ => Ok(vec![(0, 1.0)]),
                }
            }
            other => Err(Error::UnknownFamily { family: other.to_string() }),
        }
    }
}

/// Truncate a countable chain spec to the states `{0..n-1}`.
pub fn truncate(spec: &CountableChainSpec, n: usize, boundary: BoundaryPolicy) -> Result<MarkovChain> {
    if n < 2 {
        return Err(Error::BadParam {
            family: spec.family.clone(),
            reason: format!("truncation size N={n} < 2"),
        });
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for x in 0..n {
        let row = spec.row(x)?;
        let mut out_of_range = 0.0;
        for (y, pr) in &row {
            if *y < n {
                m[(x, *y)] += pr;
            } else {
                out_of_range += pr;
            }
        }
        if out_of_range > 0.0 {
            match boundary {
                BoundaryPolicy::ReflectToLast => m[(x, n - 1)] += out_of_range,
                BoundaryPolicy::RenormalizeRow => {
                    let in_range = 1.0 - out_of_range;
                    if in_range <= 0.0 {
                        return Err(Error::EmptyRow { row: x, n });
                    }
                    for y in 0..n {
                        m[(x, y)] /= in_range;
                    }
                }
            }
        }
    }
    let labels = (0..n).map(|i| i.to_string()).collect();
    MarkovChain::validate(m, labels, DEFAULT_TOL)
}
