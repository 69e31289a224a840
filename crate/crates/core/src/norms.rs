//! Norms on functions and signed measures over a finite state space, and
//! the associated kernel algebra.
//!
//! Three norm structures appear throughout the crate:
//! - the weighted-sup norm `||F||_V = max |F(x)| / V(x)` on functions and
//!   its dual `||nu||_V = sum |nu(x)| V(x)` on signed measures,
//! - total variation `||nu||_TV = max(nu+(X), nu-(X)) = sup_A |nu(A)|`,
//! - the `L2(pi)` norm of the density `d nu / d pi`, infinite when `nu`
//!   charges a `pi`-null state.
//!
//! Induced operator norms are computed by their closed-form attained values
//! (weighted absolute row sums for the V-norm; the largest singular value of
//! the similarity-transformed kernel for `L2(pi)`), not by sampling.

use nalgebra::{DMatrix, DVector};

use crate::chain::MarkovChain;
use crate::error::{Error, Result};

/// A validated weight function: every entry finite and `>= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weight(DVector<f64>);

impl Weight {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !(v >= 1.0) || !v.is_finite() {
                return Err(Error::BadWeight { index: i, value: v });
            }
        }
        Ok(Weight(values))
    }

    /// The constant weight `V == 1` on `n` states.
    pub fn ones(n: usize) -> Self {
        Weight(DVector::from_element(n, 1.0))
    }

    /// Geometric weight `V(x) = base^x`, `base >= 1`.
    pub fn geometric(n: usize, base: f64) -> Result<Self> {
        Weight::new(DVector::from_fn(n, |i, _| base.powi(i as i32)))
    }

    /// Linear weight `V(x) = 1 + x`.
    pub fn linear(n: usize) -> Self {
        Weight(DVector::from_fn(n, |i, _| 1.0 + i as f64))
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.len() == 0
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `||F||_V = max_x |F(x)| / V(x)`.
pub fn v_norm_function(f: &DVector<f64>, v: &Weight) -> Result<f64> {
    check_dim(v.len(), f.len())?;
    Ok(f.iter()
        .zip(v.values().iter())
        .map(|(a, b)| a.abs() / b)
        .fold(0.0, f64::max))
}

/// `||nu||_V = sum_x |nu(x)| V(x)`, the attained value of
/// `sup { |nu(F)| : ||F||_V <= 1 }` (take `F(x) = V(x) sign(nu(x))`).
pub fn v_norm_measure(nu: &DVector<f64>, v: &Weight) -> Result<f64> {
    check_dim(v.len(), nu.len())?;
    Ok(nu.iter().zip(v.values().iter()).map(|(a, b)| a.abs() * b).sum())
}

/// `||nu||_TV = sup_A |nu(A)| = max(nu+(X), nu-(X))`. For `nu(X) = 0` this
/// is half the L1 distance.
pub fn tv_norm(nu: &DVector<f64>) -> f64 {
    let pos: f64 = nu.iter().filter(|&&x| x > 0.0).sum();
    let neg: f64 = nu.iter().filter(|&&x| x < 0.0).map(|x| -x).sum();
    pos.max(neg)
}

/// `L2(pi)` norm of a signed measure, i.e. of its density with respect to
/// `pi`; [`L2Norm::Infinite`] when the density does not exist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum L2Norm {
    Finite(f64),
    Infinite,
}

impl L2Norm {
    pub fn finite(self) -> Option<f64> {
        match self {
            L2Norm::Finite(x) => Some(x),
            L2Norm::Infinite => None,
        }
    }
}

pub fn l2_norm_measure(nu: &DVector<f64>, pi: &DVector<f64>) -> Result<L2Norm> {
    check_dim(pi.len(), nu.len())?;
    let mut sum = 0.0;
    for (x, (&m, &p)) in nu.iter().zip(pi.iter()).enumerate() {
        if p > 0.0 {
            sum += m * m / p;
        } else if m != 0.0 {
            let _ = x;
            return Ok(L2Norm::Infinite);
        }
    }
    Ok(L2Norm::Finite(sum.sqrt()))
}

/// The deviation kernel `Q = P - 1 (x) pi`, i.e. `Q(x,y) = P(x,y) - pi(y)`.
/// Rows of `Q` sum to 0 and `pi Q = 0`.
pub fn deviation_kernel(chain: &MarkovChain, pi: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = chain.n();
    check_dim(n, pi.len())?;
    let resid = (pi.transpose() * chain.p()).transpose() - pi;
    let dev = resid.amax();
    if dev > 1e-8 {
        return Err(Error::NotStationary { deviation: dev, tol: 1e-8 });
    }
    let mut q = chain.p().clone();
    for x in 0..n {
        for y in 0..n {
            q[(x, y)] -= pi[y];
        }
    }
    Ok(q)
}

/// Induced operator norm on `L_infty^V`:
/// `|||Q|||_V = max_x ( sum_y |Q(x,y)| V(y) ) / V(x)`.
pub fn op_norm_v(q: &DMatrix<f64>, v: &Weight) -> Result<f64> {
    check_dim(v.len(), q.nrows())?;
    check_dim(v.len(), q.ncols())?;
    let vv = v.values();
    let mut best = 0.0f64;
    for x in 0..q.nrows() {
        let mut s = 0.0;
        for y in 0..q.ncols() {
            s += q[(x, y)].abs() * vv[y];
        }
        best = best.max(s / vv[x]);
    }
    Ok(best)
}

/// Induced operator norm on `L2(pi)`: the largest singular value of
/// `D^{1/2} Q D^{-1/2}` with `D = diag(pi)`.
pub fn op_norm_l2(q: &DMatrix<f64>, pi: &DVector<f64>) -> Result<f64> {
    check_dim(pi.len(), q.nrows())?;
    check_dim(pi.len(), q.ncols())?;
    let a = similarity_transform(q, pi)?;
    Ok(largest_singular_value(&a))
}

/// `D^{1/2} Q D^{-1/2}` with `D = diag(pi)`; errors if some `pi(x) = 0`.
pub fn similarity_transform(q: &DMatrix<f64>, pi: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = pi.len();
    for (i, &p) in pi.iter().enumerate() {
        if p <= 0.0 {
            return Err(Error::DegenerateStationary { index: i });
        }
    }
    let mut a = q.clone();
    for x in 0..n {
        for y in 0..n {
            a[(x, y)] *= (pi[x] / pi[y]).sqrt();
        }
    }
    Ok(a)
}

pub(crate) fn largest_singular_value(a: &DMatrix<f64>) -> f64 {
    if a.amax() == 0.0 {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0f64, |acc, &s| acc.max(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    #[test]
    fn v_norm_function_examples() {
        let v = Weight::new(dvector![1.0, 2.0]).unwrap();
        assert_eq!(v_norm_function(&dvector![1.0, 2.0], &v).unwrap(), 1.0);
        assert_eq!(v_norm_function(&dvector![0.0, 0.0], &v).unwrap(), 0.0);
        assert_eq!(v_norm_function(&dvector![3.0, 1.0], &v).unwrap(), 3.0);
    }

    #[test]
    fn weight_rejects_below_one() {
        assert!(Weight::new(dvector![1.0, 0.5]).is_err());
        assert!(Weight::new(dvector![1.0, f64::INFINITY]).is_err());
    }

    /// Brute-force oracle: maximize |nu(F)| over all sign patterns F = +-V.
    fn v_norm_measure_oracle(nu: &DVector<f64>, v: &Weight) -> f64 {
        let n = nu.len();
        let mut best = 0.0f64;
        for mask in 0..(1u32 << n) {
            let mut s = 0.0;
            for x in 0..n {
                let sign = if mask & (1 << x) != 0 { 1.0 } else { -1.0 };
                s += sign * v.values()[x] * nu[x];
            }
            best = best.max(s.abs());
        }
        best
    }

    #[test]
    fn v_norm_measure_examples() {
        let v1 = Weight::ones(2);
        assert_eq!(v_norm_measure(&dvector![0.5, -0.5], &v1).unwrap(), 1.0);
        assert_eq!(v_norm_measure(&dvector![0.0, 0.0], &v1).unwrap(), 0.0);
        let v = Weight::new(dvector![1.0, 4.0]).unwrap();
        let nu = dvector![0.3, -0.3];
        assert_abs_diff_eq!(v_norm_measure(&nu, &v).unwrap(), 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            v_norm_measure(&nu, &v).unwrap(),
            v_norm_measure_oracle(&nu, &v),
            epsilon = 1e-15
        );
    }

    /// Subset-enumeration oracle for the TV norm: sup_A |nu(A)|.
    fn tv_oracle(nu: &DVector<f64>) -> f64 {
        let n = nu.len();
        let mut best = 0.0f64;
        for mask in 0..(1u32 << n) {
            let s: f64 = (0..n).filter(|x| mask & (1 << x) != 0).map(|x| nu[x]).sum();
            best = best.max(s.abs());
        }
        best
    }

    #[test]
    fn tv_norm_examples() {
        // delta_0 P - pi for the two-state(0.3, 0.2) chain.
        let nu = dvector![0.7 - 0.4, 0.3 - 0.6];
        assert_abs_diff_eq!(tv_norm(&nu), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(tv_norm(&nu), tv_oracle(&nu), epsilon = 1e-15);
        assert_eq!(tv_norm(&dvector![0.0, 0.0]), 0.0);
        assert_eq!(tv_norm(&dvector![1.0, 0.0]), 1.0);
    }

    #[test]
    fn l2_norm_examples() {
        let pi = dvector![0.4, 0.6];
        let nu = dvector![0.6, -0.6]; // delta_0 - pi
        let got = l2_norm_measure(&nu, &pi).unwrap().finite().unwrap();
        assert_abs_diff_eq!(got, 1.5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(
            l2_norm_measure(&dvector![0.0, 0.0], &pi).unwrap(),
            L2Norm::Finite(0.0)
        );
        assert_eq!(
            l2_norm_measure(&dvector![1.0, 0.0], &dvector![0.0, 1.0]).unwrap(),
            L2Norm::Infinite
        );
    }

    #[test]
    fn deviation_kernel_examples() {
        let c = MarkovChain::two_state(0.5, 0.5);
        let pi = c.analyze().stationary.unwrap();
        let q = deviation_kernel(&c, &pi).unwrap();
        assert!(q.amax() < 1e-14);

        let c = MarkovChain::two_state(0.3, 0.2);
        let pi = c.analyze().stationary.unwrap();
        let q = deviation_kernel(&c, &pi).unwrap();
        assert_abs_diff_eq!(q[(0, 0)], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(q[(0, 1)], -0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(q[(1, 0)], -0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(q[(1, 1)], 0.2, epsilon = 1e-12);
        // Row sums 0 and pi Q = 0.
        for x in 0..2 {
            assert_abs_diff_eq!(q.row(x).sum(), 0.0, epsilon = 1e-14);
        }
        let piq = q.transpose() * pi;
        assert!(piq.amax() < 1e-14);
    }

    #[test]
    fn deviation_kernel_rejects_non_stationary() {
        let c = MarkovChain::two_state(0.3, 0.2);
        let err = deviation_kernel(&c, &dvector![0.5, 0.5]).unwrap_err();
        assert!(matches!(err, Error::NotStationary { .. }));
    }

    #[test]
    fn op_norm_v_examples() {
        let c = MarkovChain::two_state(0.3, 0.2);
        let pi = c.analyze().stationary.unwrap();
        let q = deviation_kernel(&c, &pi).unwrap();
        let v = Weight::ones(2);
        assert_abs_diff_eq!(op_norm_v(&q, &v).unwrap(), 0.6, epsilon = 1e-12);
        let id = DMatrix::identity(2, 2);
        assert_eq!(op_norm_v(&id, &v).unwrap(), 1.0);
        assert_eq!(op_norm_v(&DMatrix::zeros(2, 2), &v).unwrap(), 0.0);
    }

    #[test]
    fn op_norm_l2_examples() {
        let pi = dvector![0.4, 0.6];
        let id = DMatrix::identity(2, 2);
        assert_abs_diff_eq!(op_norm_l2(&id, &pi).unwrap(), 1.0, epsilon = 1e-12);

        let c = MarkovChain::two_state(0.5, 0.5);
        let pi5 = c.analyze().stationary.unwrap();
        let q = deviation_kernel(&c, &pi5).unwrap();
        assert!(op_norm_l2(&q, &pi5).unwrap() < 1e-12);

        // Reversible two-state: the similarity transform is symmetric, so
        // the operator norm equals |lambda_2| = 0.5.
        let c = MarkovChain::two_state(0.3, 0.2);
        let pi = c.analyze().stationary.unwrap();
        let q = deviation_kernel(&c, &pi).unwrap();
        assert_abs_diff_eq!(op_norm_l2(&q, &pi).unwrap(), 0.5, epsilon = 1e-10);
    }

    #[test]
    fn op_norm_l2_rejects_degenerate_pi() {
        let q = DMatrix::identity(2, 2);
        assert!(matches!(
            op_norm_l2(&q, &dvector![1.0, 0.0]),
            Err(Error::DegenerateStationary { index: 1 })
        ));
    }

    #[test]
    fn tv_is_half_the_v1_measure_norm_for_balanced_measures() {
        let nu = dvector![0.25, -0.1, -0.15];
        let v = Weight::ones(3);
        assert_abs_diff_eq!(
            v_norm_measure(&nu, &v).unwrap(),
            2.0 * tv_norm(&nu),
            epsilon = 1e-15
        );
    }
}
