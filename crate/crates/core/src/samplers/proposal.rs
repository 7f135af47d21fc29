use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, psd_sqrt, Mat};
use crate::rng::fill_normal;
use crate::scalar::Real;

/// Gaussian random-walk proposal with innovation covariance `Ω`.
#[derive(Debug, Clone)]
pub struct RwmProposal<T> {
    omega: Mat<T>,
    root: Mat<T>,
}

impl<T: Real> RwmProposal<T> {
    pub fn new(omega: Mat<T>) -> Result<Self> {
        if omega.rows() != omega.cols() || !omega.is_finite() {
            return Err(Error::InvalidConfig(
                "proposal covariance must be square and finite".into(),
            ));
        }
        let tol = T::of(1e-9) * (T::one() + omega.frobenius());
        if omega.max_asymmetry() > tol {
            return Err(Error::InvalidConfig("proposal covariance is not symmetric".into()));
        }
        let mut sym = omega;
        sym.symmetrize();
        let min = min_eigenvalue(&sym);
        if min < -tol {
            return Err(Error::NotPsd {
                min_eigenvalue: min.as_f64(),
            });
        }
        Ok(Self {
            root: psd_sqrt(&sym),
            omega: sym,
        })
    }

    pub fn diagonal(variances: &[T]) -> Result<Self> {
        Self::new(Mat::from_diag(variances))
    }

    pub fn dim(&self) -> usize {
        self.omega.rows()
    }

    pub fn omega(&self) -> &Mat<T> {
        &self.omega
    }

    /// `x + s·Ω^{1/2} z`; the scale `s` multiplies the standard deviation.
    pub fn propose_scaled(&self, x: &[T], scale: T, rng: &mut dyn RngCore) -> Vec<T> {
        let mut z = vec![T::zero(); x.len()];
        fill_normal(rng, &mut z);
        let step = self.root.mul_vec(&z);
        x.iter().zip(step).map(|(&a, s)| a + scale * s).collect()
    }

    pub fn propose(&self, x: &[T], rng: &mut dyn RngCore) -> Vec<T> {
        self.propose_scaled(x, T::one(), rng)
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            omega: self.omega.scaled(factor),
            root: self.root.scaled(factor.sqrt()),
        }
    }
}
