use std::fmt;
use std::sync::Arc;

use crate::scalar::Real;

type LogDensityFn<T> = dyn Fn(&[T]) -> T + Send + Sync;

/// Prior over the parameters on the working scale. For log-transformed
/// components the density is that of `ln θ_i`, so no Jacobian term is needed.
#[derive(Clone)]
pub enum Prior<T> {
    /// Improper constant density.
    Flat,
    IndependentNormal {
        mean: Vec<T>,
        sd: Vec<T>,
    },
    IndependentUniform {
        lower: Vec<T>,
        upper: Vec<T>,
    },
    Custom(Arc<LogDensityFn<T>>),
}

impl<T: Real> Prior<T> {
    pub fn normal(p: usize, mean: T, sd: T) -> Self {
        Self::IndependentNormal {
            mean: vec![mean; p],
            sd: vec![sd; p],
        }
    }

    pub fn uniform(p: usize, lower: T, upper: T) -> Self {
        Self::IndependentUniform {
            lower: vec![lower; p],
            upper: vec![upper; p],
        }
    }

    pub fn log_density(&self, work: &[T]) -> T {
        match self {
            Prior::Flat => T::zero(),
            Prior::IndependentNormal { mean, sd } => work
                .iter()
                .zip(mean.iter().zip(sd))
                .map(|(&x, (&mu, &s))| {
                    let z = (x - mu) / s;
                    -T::of(0.5) * z * z - s.ln() - T::half_ln_2pi()
                })
                .sum(),
            Prior::IndependentUniform { lower, upper } => {
                let mut total = T::zero();
                for (&x, (&lo, &hi)) in work.iter().zip(lower.iter().zip(upper)) {
                    if x < lo || x > hi {
                        return T::neg_infinity();
                    }
                    total = total - (hi - lo).ln();
                }
                total
            }
            Prior::Custom(f) => f(work),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for Prior<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prior::Flat => f.write_str("Flat"),
            Prior::IndependentNormal { mean, sd } => f
                .debug_struct("IndependentNormal")
                .field("mean", mean)
                .field("sd", sd)
                .finish(),
            Prior::IndependentUniform { lower, upper } => f
                .debug_struct("IndependentUniform")
                .field("lower", lower)
                .field("upper", upper)
                .finish(),
            Prior::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}
