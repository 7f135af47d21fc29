//! Importance-sampling estimators of the Euler transition densities
//! `p^(m)(x_{t+1} | x_t, θ)` and of the initial term `p^(m)(x_1 | θ)`, each a
//! deterministic function of its own block of Gaussian innovations.

use rand::RngCore;

use crate::bridge::{propagate_weighted, BridgeKind, InnovationBlock};
use crate::error::{Error, Result};
use crate::filter::numeric_to_neg_inf;
use crate::parallel::Workers;
use crate::rng::fill_normal;
use crate::scalar::{log_mean_exp, Real};
use crate::sde::{Diffusion, InitialState, ParamVector, Problem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionEstimate<T> {
    pub log_value: T,
    pub interval: usize,
    pub particles: usize,
}

/// Per-interval innovation storage for the augmented sampler.
///
/// Interval `t` (from `x_t` to `x_{t+1}`, `t = 0..n-1`) owns a contiguous
/// block of `N × rows_t × d` values, sample-major. Interval 0 carries one
/// extra row per sample, placed first, that drives the `x_0` draw; the
/// remaining rows are the `m − 1` bridge innovations.
#[derive(Debug, Clone, PartialEq)]
pub struct Innovations<T> {
    n: usize,
    particles: usize,
    m: usize,
    d: usize,
    data: Vec<T>,
}

impl<T: Real> Innovations<T> {
    /// Total number of values for `n` intervals of `particles` samples.
    pub fn len_for(n: usize, particles: usize, m: usize, d: usize) -> usize {
        n * particles * (m - 1) * d + if n > 0 { particles * d } else { 0 }
    }

    pub fn zeros(n: usize, particles: usize, m: usize, d: usize) -> Self {
        Self {
            n,
            particles,
            m,
            d,
            data: vec![T::zero(); Self::len_for(n, particles, m, d)],
        }
    }

    pub fn standard(n: usize, particles: usize, m: usize, d: usize, rng: &mut dyn RngCore) -> Self {
        let mut u = Self::zeros(n, particles, m, d);
        fill_normal(rng, &mut u.data);
        u
    }

    pub fn from_vec(n: usize, particles: usize, m: usize, d: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != Self::len_for(n, particles, m, d) {
            return Err(Error::Shape("innovation vector has the wrong length".into()));
        }
        Ok(Self {
            n,
            particles,
            m,
            d,
            data,
        })
    }

    pub fn rows(&self, t: usize) -> usize {
        if t == 0 {
            self.m
        } else {
            self.m - 1
        }
    }

    fn range(&self, t: usize) -> std::ops::Range<usize> {
        let per_row = self.particles * self.d;
        let start = if t == 0 {
            0
        } else {
            per_row * (self.m + (t - 1) * (self.m - 1))
        };
        start..start + per_row * self.rows(t)
    }

    pub fn block(&self, t: usize) -> &[T] {
        &self.data[self.range(t)]
    }

    pub fn block_mut(&mut self, t: usize) -> &mut [T] {
        let r = self.range(t);
        &mut self.data[r]
    }

    pub fn set_block(&mut self, t: usize, values: &[T]) {
        self.block_mut(t).copy_from_slice(values);
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

fn check_block<T>(u: &[T], particles: usize, rows: usize, d: usize) -> Result<()> {
    if particles == 0 {
        return Err(Error::InvalidConfig("need at least one importance sample".into()));
    }
    if u.len() != particles * rows * d {
        return Err(Error::Shape(format!(
            "innovation block has {} values, expected {particles}x{rows}x{d}",
            u.len()
        )));
    }
    Ok(())
}

/// Log importance weights `ln p_e − ln g` of each exact-endpoint bridge.
pub fn transition_log_weights<T: Real>(
    model: &dyn Diffusion<T>,
    x_t: &[T],
    x_next: &[T],
    theta: &ParamVector<T>,
    m: usize,
    u_t: &[T],
    particles: usize,
) -> Result<Vec<T>> {
    let d = model.state_dim();
    let rows = m - 1;
    check_block(u_t, particles, rows, d)?;
    let kind = BridgeKind::ExactEndpoint { x_next };
    (0..particles)
        .map(|i| {
            let block = InnovationBlock::new(&u_t[i * rows * d..(i + 1) * rows * d], rows, d)?;
            numeric_to_neg_inf(propagate_weighted(&kind, model, x_t, theta, m, &block).map(|w| w.log_pe - w.log_g))
        })
        .collect()
}

/// `ln p̂^(m)_{u_t}(x_{t+1} | x_t, θ)`; `u_t` holds `N × (m−1) × d` values.
#[allow(clippy::too_many_arguments)]
pub fn estimate_transition<T: Real>(
    model: &dyn Diffusion<T>,
    x_t: &[T],
    x_next: &[T],
    theta: &ParamVector<T>,
    m: usize,
    u_t: &[T],
    particles: usize,
    interval: usize,
) -> Result<TransitionEstimate<T>> {
    let lw = transition_log_weights(model, x_t, x_next, theta, m, u_t, particles)?;
    Ok(TransitionEstimate {
        log_value: log_mean_exp(&lw),
        interval,
        particles,
    })
}

/// `ln p̂^(m)_{u_0}(x_1 | θ)`, with `x_0^i` drawn through the prior from the
/// first row of each sample's block; `u_0` holds `N × m × d` values.
pub fn estimate_initial<T: Real>(
    model: &dyn Diffusion<T>,
    init: &InitialState<T>,
    x_1: &[T],
    theta: &ParamVector<T>,
    m: usize,
    u_0: &[T],
    particles: usize,
) -> Result<TransitionEstimate<T>> {
    let d = model.state_dim();
    check_block(u_0, particles, m, d)?;
    let kind = BridgeKind::ExactEndpoint { x_next: x_1 };
    let per = m * d;
    let lw: Vec<T> = (0..particles)
        .map(|i| {
            let sample = &u_0[i * per..(i + 1) * per];
            let x0 = init.draw(&sample[..d]);
            if !model.domain().contains(&x0) {
                return Ok(T::neg_infinity());
            }
            let block = InnovationBlock::new(&sample[d..], m - 1, d)?;
            numeric_to_neg_inf(propagate_weighted(&kind, model, &x0, theta, m, &block).map(|w| w.log_pe - w.log_g))
        })
        .collect::<Result<_>>()?;
    Ok(TransitionEstimate {
        log_value: log_mean_exp(&lw),
        interval: 0,
        particles,
    })
}

/// Log estimate for interval `t` (`x_t → x_{t+1}`), where `x_o[j]` is `x_{j+1}`.
pub fn estimate_interval<T: Real>(
    problem: &Problem<'_, T>,
    x_o: &[Vec<T>],
    theta: &ParamVector<T>,
    u: &Innovations<T>,
    t: usize,
) -> Result<T> {
    let m = problem.grid.m;
    let est = if t == 0 {
        estimate_initial(problem.model, problem.init, &x_o[0], theta, m, u.block(0), u.particles)?
    } else {
        estimate_transition(
            problem.model,
            &x_o[t - 1],
            &x_o[t],
            theta,
            m,
            u.block(t),
            u.particles,
            t,
        )?
    };
    Ok(est.log_value)
}

/// Every per-interval log estimate; the joint log estimate is their sum.
pub fn estimate_joint<T: Real>(
    problem: &Problem<'_, T>,
    x_o: &[Vec<T>],
    theta: &ParamVector<T>,
    u: &Innovations<T>,
    workers: &Workers,
) -> Result<Vec<T>> {
    let n = problem.n();
    if x_o.len() != n || u.n != n || u.m != problem.grid.m || u.d != problem.d() {
        return Err(Error::Shape(
            "latent states or innovations do not match the problem".into(),
        ));
    }
    workers
        .map(n, |t| estimate_interval(problem, x_o, theta, u, t))
        .into_iter()
        .collect()
}
