//! Deterministic random streams.
//!
//! Every random draw in a sampler is taken from a stream addressed by a
//! `(seed, a, b, c)` tuple, typically `(iteration, update kind, time index)`.
//! Streams never share state, so rejecting a proposal or changing the worker
//! count cannot shift any later draw.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

pub type StreamRng = ChaCha8Rng;

/// Source of addressable, independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child source for a sub-task, e.g. one replicate of a pilot study.
    pub fn fork(&self, tag: u64) -> Self {
        Self {
            seed: splitmix(self.seed ^ splitmix(tag.wrapping_add(0xA5A5_A5A5))),
        }
    }

    pub fn stream(&self, a: u64, b: u64, c: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let id = splitmix(splitmix(splitmix(a) ^ b.rotate_left(21)) ^ c.rotate_left(42));
        rng.set_stream(id);
        rng
    }
}

/// Standard normal draw, produced in `f64` and narrowed to `T` so the same
/// stream gives the same variates for every scalar type.
#[inline]
pub fn normal<T: Real, R: RngCore + ?Sized>(rng: &mut R) -> T {
    let z: f64 = rng.sample(StandardNormal);
    T::of(z)
}

pub fn fill_normal<T: Real, R: RngCore + ?Sized>(rng: &mut R, out: &mut [T]) {
    for v in out.iter_mut() {
        *v = normal(rng);
    }
}

pub fn normal_vec<T: Real, R: RngCore + ?Sized>(rng: &mut R, len: usize) -> Vec<T> {
    let mut v = vec![T::zero(); len];
    fill_normal(rng, &mut v);
    v
}

/// Uniform on `(0, 1)`.
#[inline]
pub fn uniform<T: Real, R: RngCore + ?Sized>(rng: &mut R) -> T {
    let u: f64 = rng.random();
    T::of(u.max(f64::MIN_POSITIVE))
}

/// Standard normal CDF.
pub fn std_normal_cdf<T: Real>(z: T) -> T {
    let x = z.as_f64();
    T::of(0.5 * libm::erfc(-x / std::f64::consts::SQRT_2))
}
