//! Desk-scale numerical toolkit for the spectral theory of finite-state
//! Markov chains: spectral gaps in `L2(pi)` and weighted-sup spaces, drift
//! and minorization certificates, constructive Lyapunov synthesis from an
//! `L2` gap, and CLT-failure diagnostics on truncated countable chains.

pub mod chain;
pub mod ergodicity;
pub mod error;
pub mod lab;
pub mod lyapunov;
pub mod norms;
pub mod powers;
pub mod specfile;
pub mod spectral;

pub use chain::{truncate, BoundaryPolicy, ChainStructure, CountableChainSpec, MarkovChain};
pub use error::{Error, Result};
pub use norms::Weight;
