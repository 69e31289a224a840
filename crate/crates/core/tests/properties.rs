//! Randomized invariants that cut across modules: norm duality and
//! submultiplicativity, spectral-radius domination, truncation validity,
//! stationarity, and the reversible-chain bounds.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use ergograph_core::chain::{truncate, BoundaryPolicy, CountableChainSpec, MarkovChain};
use ergograph_core::norms::{self, Weight};
use ergograph_core::spectral::{self, GapMethod};

/// Strictly positive rows => irreducible and aperiodic.
fn stochastic_chain(max_n: usize) -> impl Strategy<Value = MarkovChain> {
    (2..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(proptest::collection::vec(0.05..1.0f64, n), n).prop_map(
            |rows| {
                let rows: Vec<Vec<f64>> = rows
                    .into_iter()
                    .map(|r| {
                        let s: f64 = r.iter().sum();
                        r.into_iter().map(|x| x / s).collect()
                    })
                    .collect();
                MarkovChain::from_rows(&rows).expect("normalized rows are stochastic")
            },
        )
    })
}

/// Symmetric positive edge weights give a reversible chain with
/// `pi` proportional to the row sums.
fn reversible_chain(max_n: usize) -> impl Strategy<Value = MarkovChain> {
    (2..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(0.05..1.0f64, n * (n + 1) / 2).prop_map(move |upper| {
            let mut w = DMatrix::zeros(n, n);
            let mut it = upper.into_iter();
            for i in 0..n {
                for j in i..n {
                    let x = it.next().unwrap();
                    w[(i, j)] = x;
                    w[(j, i)] = x;
                }
            }
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let s: f64 = (0..n).map(|j| w[(i, j)]).sum();
                    (0..n).map(|j| w[(i, j)] / s).collect()
                })
                .collect();
            MarkovChain::from_rows(&rows).expect("normalized rows are stochastic")
        })
    })
}


proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// |nu(F)| <= ||nu||_V ||F||_V, brute force on small dimensions.
    #[test]
    fn norm_duality(
        n in 2usize..12,
        seed_nu in proptest::collection::vec(-1.0..1.0f64, 12),
        seed_f in proptest::collection::vec(-5.0..5.0f64, 12),
        seed_v in proptest::collection::vec(1.0..10.0f64, 12),
    ) {
        let nu = DVector::from_iterator(n, seed_nu.into_iter().take(n));
        let f = DVector::from_iterator(n, seed_f.into_iter().take(n));
        let v = Weight::new(DVector::from_iterator(n, seed_v.into_iter().take(n))).unwrap();
        let pairing: f64 = nu.dot(&f);
        let bound = norms::v_norm_measure(&nu, &v).unwrap() * norms::v_norm_function(&f, &v).unwrap();
        prop_assert!(pairing.abs() <= bound * (1.0 + 1e-12) + 1e-12);
    }

    /// |||AB|||_V <= |||A|||_V |||B|||_V.
    #[test]
    fn op_norm_submultiplicative(
        n in 2usize..8,
        a in proptest::collection::vec(-1.0..1.0f64, 64),
        b in proptest::collection::vec(-1.0..1.0f64, 64),
        vv in proptest::collection::vec(1.0..10.0f64, 8),
    ) {
        let am = DMatrix::from_fn(n, n, |i, j| a[i * n + j]);
        let bm = DMatrix::from_fn(n, n, |i, j| b[i * n + j]);
        let v = Weight::new(DVector::from_iterator(n, vv.into_iter().take(n))).unwrap();
        let lhs = norms::op_norm_v(&(&am * &bm), &v).unwrap();
        let rhs = norms::op_norm_v(&am, &v).unwrap() * norms::op_norm_v(&bm, &v).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
    }

    /// The operator norm of the deviation kernel dominates its spectral
    /// radius, for every admissible weight.
    #[test]
    fn op_norm_dominates_spectral_radius(chain in stochastic_chain(8), vseed in proptest::collection::vec(1.0..10.0f64, 8)) {
        let n = chain.n();
        let pi = chain.analyze().stationary().unwrap().clone();
        let q = norms::deviation_kernel(&chain, &pi).unwrap();
        let radius = q
            .complex_eigenvalues()
            .iter()
            .map(|l| l.norm())
            .fold(0.0f64, f64::max);
        let v = Weight::new(DVector::from_iterator(n, vseed.into_iter().take(n))).unwrap();
        prop_assert!(radius <= norms::op_norm_v(&q, &v).unwrap() + 1e-9);
        prop_assert!(radius <= norms::op_norm_l2(&q, &pi).unwrap() + 1e-9);
    }

    /// Truncations of the birth-death family are valid chains under both
    /// boundary policies, and interior rows agree across policies.
    #[test]
    fn truncation_is_valid(p in 0.05..0.45f64, q in 0.05..0.45f64, n in 2usize..40) {
        let spec = CountableChainSpec::birth_death(p, q);
        for policy in [BoundaryPolicy::ReflectToLast, BoundaryPolicy::RenormalizeRow] {
            let chain = truncate(&spec, n, policy).unwrap();
            prop_assert_eq!(chain.n(), n);
            for x in 0..n {
                let s: f64 = (0..n).map(|y| chain.p()[(x, y)]).sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    /// The solved stationary distribution is stationary and normalized.
    #[test]
    fn stationary_is_stationary(chain in stochastic_chain(12)) {
        let structure = chain.analyze();
        let pi = structure.stationary().unwrap();
        prop_assert!((pi.sum() - 1.0).abs() < 1e-10);
        let pi_p = (pi.transpose() * chain.p()).transpose();
        prop_assert!((&pi_p - pi).amax() < 1e-10);
    }

    /// Eigen and contraction L2 gaps agree tightly on reversible chains.
    #[test]
    fn reversible_gap_methods_agree(chain in reversible_chain(10)) {
        let a = spectral::gap_l2(&chain, GapMethod::Eigen).unwrap();
        let b = spectral::gap_l2(&chain, GapMethod::Contraction).unwrap();
        prop_assert!((a - b).abs() <= 1e-8, "eigen {} vs contraction {}", a, b);
    }

    /// The TV bound holds with tiny slack for reversible chains and
    /// arbitrary starting distributions.
    #[test]
    fn tv_bound_holds(chain in reversible_chain(8), useed in proptest::collection::vec(0.01..1.0f64, 8)) {
        let n = chain.n();
        let s: f64 = useed.iter().take(n).sum();
        let mu = DVector::from_iterator(n, useed.into_iter().take(n).map(|x| x / s));
        let rows = spectral::verify_tv_bound(&chain, &mu, 50).unwrap();
        for row in rows {
            prop_assert!(row.ok, "n={} lhs={} rhs={}", row.n, row.lhs, row.rhs);
        }
    }

    /// Exact autocorrelations respect the Cauchy-Schwarz envelope.
    #[test]
    fn autocorrelation_cs_bound(chain in stochastic_chain(8), hseed in proptest::collection::vec(-3.0..3.0f64, 8)) {
        let n = chain.n();
        let h = DVector::from_iterator(n, hseed.into_iter().take(n));
        let ac = ergograph_core::lab::autocorrelation_exact(&chain, &h, 100).unwrap();
        for k in 0..=100 {
            prop_assert!(ac.r[k].abs() <= ac.cs_bound[k] + 1e-12);
        }
    }

    /// Synthesized Lyapunov functions verify their own certificates on
    /// random chains and observables.
    #[test]
    fn synthesis_self_verifies(chain in stochastic_chain(8), hseed in proptest::collection::vec(-2.0..2.0f64, 8)) {
        let n = chain.n();
        let h = DVector::from_iterator(n, hseed.into_iter().take(n));
        let r = ergograph_core::lyapunov::full_synthesis_pipeline(&chain, &h).unwrap();
        prop_assert!(r.synthesis.drift.residual <= 1e-9);
        prop_assert!(r.synthesis.off_c_residual <= 1e-9);
        prop_assert!(r.synthesis.domination <= 1.0 + 1e-12);
        for x in 0..n {
            prop_assert!(r.synthesis.v_h.values()[x] >= 1.0 + h[x].abs() - 1e-12);
        }
    }
}
