use thiserror::Error;

/// Crate-wide error type. Variants are grouped roughly by the module that
/// raises them; the CLI maps them onto exit codes (input errors vs. verdict
/// failures).
#[derive(Debug, Error)]
pub enum Error {
    // ---- chain construction / validation ----
    #[error("matrix is not square: {rows} rows, {cols} cols")]
    NotSquare { rows: usize, cols: usize },
    #[error("row {row} sums to {sum}, deviates from 1 by more than tol={tol}")]
    NonStochasticRow { row: usize, sum: f64, tol: f64 },
    #[error("entry ({row},{col}) = {value} is below -tol")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("duplicate state label {label:?}")]
    DuplicateLabel { label: String },
    #[error("unknown chain family {family:?}")]
    UnknownFamily { family: String },
    #[error("family {family:?} missing parameter {param:?}")]
    MissingParam { family: String, param: String },
    #[error("invalid parameter for family {family:?}: {reason}")]
    BadParam { family: String, reason: String },
    #[error("row {row}: no in-range mass to renormalize at truncation size {n}")]
    EmptyRow { row: usize, n: usize },

    // ---- norms / kernel algebra ----
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("weight must satisfy V(x) >= 1 everywhere; V({index}) = {value}")]
    BadWeight { index: usize, value: f64 },
    #[error("measure is not stationary: max |pi P - pi| = {deviation} > tol={tol}")]
    NotStationary { deviation: f64, tol: f64 },
    #[error("stationary distribution has a zero entry at state {index}")]
    DegenerateStationary { index: usize },

    // ---- spectral ----
    #[error("chain is reducible; {0}")]
    Reducible(String),
    #[error("operation not applicable: {0}")]
    NotApplicable(String),
    #[error("Gelfand trace not converged at n_max={n_max}: successive estimates differ by {spread}")]
    GelfandNotConverged { n_max: u64, spread: f64 },
    #[error("chain is not reversible: max detailed-balance violation {violation}")]
    NotReversible { violation: f64 },
    #[error("spectral gap is zero within tolerance; logarithmic rate undefined")]
    GapZero,

    // ---- ergodicity ----
    #[error("drift condition fails: state {state} has PV(x)/V(x) = {ratio} >= 1")]
    DriftFails { state: usize, ratio: f64 },
    #[error("set is not small within horizon m_max={m_max}: best eps = {best_eps}")]
    NotSmallWithinHorizon { m_max: usize, best_eps: f64 },

    // ---- lyapunov synthesis ----
    #[error("taboo complement is absorbing: spectral radius {radius} >= 1 - tol")]
    AbsorbingComplement { radius: f64 },
    #[error("theta too large: exp(theta) * taboo radius = {product} >= 1")]
    ThetaTooLarge { product: f64 },
    #[error("linear system singular in hitting-functional solve")]
    SingularSystem,
    #[error("ladder exhausted: no (r,m) in the schedules yields a nonempty C; {diagnostics}")]
    LadderExhausted { diagnostics: String },
    #[error("drift verification failed after synthesis: residual {residual} > tol (implementation bug)")]
    DriftVerificationFailed { residual: f64 },

    // ---- simulation ----
    #[error("hitting-time horizon exceeded ({cap} steps) in {count} of {total} samples")]
    HorizonExceeded { cap: u64, count: u64, total: u64 },

    // ---- io ----
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
