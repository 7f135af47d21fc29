use rand::RngCore;

use crate::error::{Error, Result};
use crate::rng::normal;
use crate::scalar::Real;

/// Crank–Nicolson kernel `u' = ρu + √(1−ρ²) ξ`, `ξ ~ N(0, I)`; it leaves
/// `N(0, I)` invariant and is reversible with respect to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnKernel<T> {
    rho: T,
    scale: T,
}

impl<T: Real> CnKernel<T> {
    pub fn new(rho: T) -> Result<Self> {
        if !(rho >= T::zero() && rho <= T::one()) {
            return Err(Error::InvalidConfig(format!("rho = {rho} is outside [0, 1]")));
        }
        Ok(Self {
            rho,
            scale: (T::one() - rho * rho).sqrt(),
        })
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn propose_into(&self, u: &[T], out: &mut [T], rng: &mut dyn RngCore) {
        for (o, &v) in out.iter_mut().zip(u) {
            let xi: T = normal(rng);
            *o = self.rho * v + self.scale * xi;
        }
    }

    pub fn propose(&self, u: &[T], rng: &mut dyn RngCore) -> Vec<T> {
        let mut out = vec![T::zero(); u.len()];
        self.propose_into(u, &mut out, rng);
        out
    }
}

pub fn cn_propose<T: Real>(kernel: &CnKernel<T>, u: &[T], rng: &mut dyn RngCore) -> Vec<T> {
    kernel.propose(u, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;

    #[test]
    fn endpoints_of_rho() {
        let u = [0.3, -1.2, 2.0];
        let mut rng = Streams::new(1).stream(0, 0, 0);
        assert_eq!(CnKernel::new(1.0).unwrap().propose(&u, &mut rng), u.to_vec());
        let a = CnKernel::new(0.0)
            .unwrap()
            .propose(&u, &mut Streams::new(2).stream(0, 0, 0));
        let b: Vec<f64> = crate::rng::normal_vec(&mut Streams::new(2).stream(0, 0, 0), 3);
        assert_eq!(a, b);
        assert!(CnKernel::new(1.5).is_err());
    }
}
