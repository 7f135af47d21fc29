//! Bootstrap-style particle filter with modified diffusion bridge proposals.
//! The likelihood estimate is a deterministic function of a block of
//! standard Gaussian variates, which is what lets correlated samplers move
//! those variates with a Crank–Nicolson kernel.

use rand::RngCore;

use crate::bridge::{propagate_weighted, BridgeKind, InnovationBlock};
use crate::error::{Error, Result};
use crate::parallel::Workers;
use crate::rng::{fill_normal, std_normal_cdf};
use crate::scalar::{log_mean_exp, Real};
use crate::sde::{ParamVector, Problem};

/// Shape of the randomness consumed by one filter run.
///
/// Layout (fixed, so the correlated kernel pairs like with like):
/// `[initial: N×d][propagation: n×N×m×d][resampling: n]`, where the
/// propagation block is interval-major, then particle, then substep, then
/// state component. The initial block is only read when `x_0` is random.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuxLayout {
    pub n: usize,
    pub particles: usize,
    pub m: usize,
    pub d: usize,
}

impl AuxLayout {
    pub fn new(n: usize, particles: usize, m: usize, d: usize) -> Self {
        Self { n, particles, m, d }
    }

    /// Total number of variates, `d*`.
    pub fn len(&self) -> usize {
        self.particles * self.d + self.n * self.particles * self.m * self.d + self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn initial_range(&self, i: usize) -> std::ops::Range<usize> {
        i * self.d..(i + 1) * self.d
    }

    pub fn initial<'a, T>(&self, u: &'a [T], i: usize) -> &'a [T] {
        &u[self.initial_range(i)]
    }

    pub fn propagation_range(&self, t: usize, i: usize) -> std::ops::Range<usize> {
        let block = self.m * self.d;
        let o = self.particles * self.d + (t * self.particles + i) * block;
        o..o + block
    }

    pub fn propagation<'a, T>(&self, u: &'a [T], t: usize, i: usize) -> &'a [T] {
        &u[self.propagation_range(t, i)]
    }

    pub fn resampling<T: Copy>(&self, u: &[T], t: usize) -> T {
        u[self.len() - self.n + t]
    }
}

/// Owned auxiliary variates together with their layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryVariates<T> {
    layout: AuxLayout,
    data: Vec<T>,
}

impl<T: Real> AuxiliaryVariates<T> {
    pub fn zeros(layout: AuxLayout) -> Self {
        Self {
            layout,
            data: vec![T::zero(); layout.len()],
        }
    }

    pub fn standard(layout: AuxLayout, rng: &mut dyn RngCore) -> Self {
        let mut v = Self::zeros(layout);
        fill_normal(rng, &mut v.data);
        v
    }

    pub fn from_vec(layout: AuxLayout, data: Vec<T>) -> Result<Self> {
        if data.len() != layout.len() {
            return Err(Error::Shape("auxiliary variate vector has the wrong length".into()));
        }
        Ok(Self { layout, data })
    }

    pub fn layout(&self) -> AuxLayout {
        self.layout
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

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }
}

/// Systematic resampling driven by one Gaussian variate mapped through `Φ`.
/// Returns 0-based ancestor indices.
pub fn systematic_resample<T: Real>(weights: &[T], gaussian_variate: T) -> Result<Vec<usize>> {
    let n = weights.len();
    let total: T = weights.iter().copied().sum();
    if !(total > T::zero()) || !total.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let u = std_normal_cdf(gaussian_variate);
    let nf = T::of_usize(n);
    let mut ancestors = Vec::with_capacity(n);
    let mut j = 0;
    let mut cum = weights[0] / total;
    for i in 0..n {
        let pos = (T::of_usize(i) + u) / nf;
        while cum < pos && j + 1 < n {
            j += 1;
            cum = cum + weights[j] / total;
        }
        ancestors.push(j);
    }
    Ok(ancestors)
}

/// Greedy nearest-neighbour ordering: start from the particle with the
/// smallest first component, then repeatedly take the closest remaining
/// particle (Euclidean, full state). Ties go to the lower original index.
pub fn euclidean_sort<T: Real>(states: &[T], d: usize) -> Vec<usize> {
    let n = states.len() / d;
    if n == 0 {
        return Vec::new();
    }
    let point = |i: usize| &states[i * d..(i + 1) * d];
    let mut first = 0;
    for i in 1..n {
        if point(i)[0] < point(first)[0] {
            first = i;
        }
    }
    let mut order = Vec::with_capacity(n);
    order.push(first);
    let mut remaining: Vec<usize> = (0..n).filter(|&i| i != first).collect();
    while !remaining.is_empty() {
        let last = point(*order.last().unwrap());
        let mut best_pos = 0;
        let mut best = T::infinity();
        for (pos, &i) in remaining.iter().enumerate() {
            let dist: T = point(i).iter().zip(last).map(|(&a, &b)| (a - b) * (a - b)).sum();
            if dist < best {
                best = dist;
                best_pos = pos;
            }
        }
        order.push(remaining.remove(best_pos));
    }
    order
}

pub(crate) fn numeric_to_neg_inf<T: Real>(r: Result<T>) -> Result<T> {
    match r {
        Ok(v) if v.is_nan() => Ok(T::neg_infinity()),
        Ok(v) => Ok(v),
        Err(Error::Shape(s)) => Err(Error::Shape(s)),
        Err(Error::InvalidConfig(s)) => Err(Error::InvalidConfig(s)),
        Err(_) => Ok(T::neg_infinity()),
    }
}

/// Runs the particle filter and returns `ln p̂_u(y | θ)`; `-inf` when every
/// particle weight vanishes at some time.
pub fn run_filter<T: Real>(
    problem: &Problem<'_, T>,
    theta: &ParamVector<T>,
    u: &AuxiliaryVariates<T>,
    sort_enabled: bool,
    workers: &Workers,
) -> Result<T> {
    run_filter_raw(problem, theta, u.layout, &u.data, sort_enabled, workers)
}

/// [`run_filter`] over a borrowed variate vector.
pub fn run_filter_raw<T: Real>(
    problem: &Problem<'_, T>,
    theta: &ParamVector<T>,
    layout: AuxLayout,
    u: &[T],
    sort_enabled: bool,
    workers: &Workers,
) -> Result<T> {
    let model = problem.model;
    let d = model.state_dim();
    let m = problem.grid.m;
    let n = problem.data.len();
    let particles = layout.particles;
    if particles == 0 {
        return Err(Error::InvalidConfig("need at least one particle".into()));
    }
    if layout.n != n || layout.m != m || layout.d != d || problem.grid.n != n || u.len() != layout.len() {
        return Err(Error::Shape("auxiliary variates do not match the problem".into()));
    }

    let mut states: Vec<T> = (0..particles)
        .flat_map(|i| problem.init.draw(layout.initial(u, i)))
        .collect();
    let mut log_w = vec![T::zero(); particles];
    let mut weights = vec![T::zero(); particles];
    let mut log_lik = T::zero();

    for t in 0..n {
        let max = log_w.iter().copied().fold(T::neg_infinity(), T::max);
        for (w, &lw) in weights.iter_mut().zip(&log_w) {
            *w = (lw - max).exp();
        }
        let ancestors = match systematic_resample(&weights, layout.resampling(u, t)) {
            Ok(a) => a,
            Err(Error::DegenerateWeights) => return Ok(T::neg_infinity()),
            Err(e) => return Err(e),
        };
        let y = &problem.data[t];
        let kind = BridgeKind::NoisyEndpoint {
            obs: problem.obs,
            y_next: y,
        };
        let results = workers.map(particles, |i| -> Result<(Vec<T>, T)> {
            let a = ancestors[i];
            let start = &states[a * d..(a + 1) * d];
            let block = InnovationBlock::new(layout.propagation(u, t, i), m, d)?;
            match propagate_weighted(&kind, model, start, theta, m, &block) {
                Ok(draw) => {
                    let end = draw.segment[(m - 1) * d..].to_vec();
                    let lw = problem.obs.log_density(y, &end).map(|lo| lo + draw.log_pe - draw.log_g);
                    Ok((end, numeric_to_neg_inf(lw)?))
                }
                Err(e) => {
                    numeric_to_neg_inf::<T>(Err(e))?;
                    Ok((start.to_vec(), T::neg_infinity()))
                }
            }
        });
        let mut next = Vec::with_capacity(particles * d);
        for (i, r) in results.into_iter().enumerate() {
            let (end, lw) = r?;
            next.extend_from_slice(&end);
            log_w[i] = lw;
        }
        let step = log_mean_exp(&log_w);
        if step == T::neg_infinity() {
            return Ok(T::neg_infinity());
        }
        log_lik = log_lik + step;
        if sort_enabled && particles > 1 {
            let order = euclidean_sort(&next, d);
            let mut sorted = Vec::with_capacity(next.len());
            let mut sorted_w = Vec::with_capacity(particles);
            for &i in &order {
                sorted.extend_from_slice(&next[i * d..(i + 1) * d]);
                sorted_w.push(log_w[i]);
            }
            next = sorted;
            log_w = sorted_w;
        }
        states = next;
    }
    Ok(log_lik)
}
