use std::time::Instant;

use crate::error::{Error, Result};
use crate::filter::{numeric_to_neg_inf, run_filter_raw, AuxLayout};
use crate::parallel::Workers;
use crate::prior::Prior;
use crate::rng::{normal_vec, uniform, Streams};
use crate::scalar::Real;
use crate::sde::{ParamTransform, ParamVector, Problem};

use super::cn::CnKernel;
use super::output::ChainOutput;
use super::proposal::RwmProposal;
use super::{mh_accept, tags};

/// An estimator of `ln p(y | θ)` that is a deterministic function of a
/// vector of standard Gaussian variates.
pub trait LikelihoodEstimator<T: Real>: Sync {
    /// Number of variates consumed at `particles` particles.
    fn aux_len(&self, particles: usize) -> usize;

    fn log_likelihood(&self, theta: &ParamVector<T>, u: &[T], particles: usize, workers: &Workers) -> Result<T>;
}

/// The bridge particle filter as a [`LikelihoodEstimator`].
#[derive(Clone, Copy)]
pub struct ParticleFilterEstimator<'a, T: Real> {
    pub problem: Problem<'a, T>,
    pub sort: bool,
}

impl<'a, T: Real> ParticleFilterEstimator<'a, T> {
    pub fn new(problem: Problem<'a, T>, sort: bool) -> Self {
        Self { problem, sort }
    }

    pub fn layout(&self, particles: usize) -> AuxLayout {
        AuxLayout::new(self.problem.n(), particles, self.problem.grid.m, self.problem.d())
    }
}

impl<T: Real> LikelihoodEstimator<T> for ParticleFilterEstimator<'_, T> {
    fn aux_len(&self, particles: usize) -> usize {
        self.layout(particles).len()
    }

    fn log_likelihood(&self, theta: &ParamVector<T>, u: &[T], particles: usize, workers: &Workers) -> Result<T> {
        run_filter_raw(&self.problem, theta, self.layout(particles), u, self.sort, workers)
    }
}

/// Robbins–Monro scaling of the random-walk step toward a target acceptance
/// rate: `ln s ← ln s + (i+1)^{-decay} (accepted − target)`. Meant for pilot
/// runs only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adaptation {
    pub target: f64,
    pub decay: f64,
}

impl Default for Adaptation {
    fn default() -> Self {
        Self {
            target: 0.25,
            decay: 0.6,
        }
    }
}

impl Adaptation {
    pub(crate) fn step(&self, log_scale: f64, iteration: usize, accepted: bool) -> f64 {
        let gain = ((iteration + 1) as f64).powf(-self.decay);
        log_scale + gain * (f64::from(u8::from(accepted)) - self.target)
    }
}

#[derive(Debug, Clone)]
pub struct PmSettings<T> {
    pub particles: usize,
    pub n_iters: usize,
    pub proposal: RwmProposal<T>,
    /// Initial parameters on the working scale.
    pub theta0: Vec<T>,
    pub adaptation: Option<Adaptation>,
}

pub(crate) const INIT_ATTEMPTS: u64 = 100;

/// Correlated pseudo-marginal Metropolis–Hastings: `θ'` from the random walk
/// and `u'` from the Crank–Nicolson kernel, accepted jointly.
pub fn cpmmh_run<T: Real, E: LikelihoodEstimator<T> + ?Sized>(
    estimator: &E,
    transform: &ParamTransform,
    prior: &Prior<T>,
    settings: &PmSettings<T>,
    kernel: &CnKernel<T>,
    streams: &Streams,
    workers: &Workers,
) -> Result<ChainOutput<T>> {
    if settings.particles == 0 {
        return Err(Error::InvalidConfig("need at least one particle".into()));
    }
    if settings.theta0.len() != transform.dim() || settings.proposal.dim() != transform.dim() {
        return Err(Error::Shape(
            "initial parameters or proposal have the wrong dimension".into(),
        ));
    }
    let start = Instant::now();
    let n_u = estimator.aux_len(settings.particles);
    let mut theta = transform.params(&settings.theta0);
    let mut log_prior = prior.log_density(&theta.work);
    if !log_prior.is_finite() || !theta.is_finite() {
        return Err(Error::InvalidConfig(
            "initial parameters lie outside the prior support".into(),
        ));
    }

    let mut state = None;
    for attempt in 0..INIT_ATTEMPTS {
        let u: Vec<T> = normal_vec(&mut streams.stream(tags::INIT_ITER, tags::INIT, attempt), n_u);
        let ll = numeric_to_neg_inf(estimator.log_likelihood(&theta, &u, settings.particles, workers))?;
        if ll.is_finite() {
            state = Some((u, ll));
            break;
        }
    }
    let (mut u, mut log_lik) = state.ok_or(Error::InitFailure {
        attempts: INIT_ATTEMPTS as usize,
    })?;

    let mut out = ChainOutput {
        theta: Vec::with_capacity(settings.n_iters),
        log_lik: Vec::with_capacity(settings.n_iters),
        ..ChainOutput::default()
    };
    let mut log_scale = 0.0_f64;
    let mut u_prop = vec![T::zero(); n_u];
    for i in 0..settings.n_iters {
        let mut rng = streams.stream(i as u64, tags::THETA, 0);
        let work = settings
            .proposal
            .propose_scaled(&theta.work, T::of(log_scale.exp()), &mut rng);
        kernel.propose_into(&u, &mut u_prop, &mut rng);
        let log_u: T = uniform::<T, _>(&mut rng).ln();
        let prior_prop = prior.log_density(&work);
        let mut accepted = false;
        if prior_prop > T::neg_infinity() {
            let cand = transform.params(&work);
            let ll = numeric_to_neg_inf(estimator.log_likelihood(&cand, &u_prop, settings.particles, workers))?;
            if ll > T::neg_infinity() && mh_accept(prior_prop - log_prior + ll - log_lik, log_u) {
                theta = cand;
                log_prior = prior_prop;
                log_lik = ll;
                std::mem::swap(&mut u, &mut u_prop);
                accepted = true;
            }
        }
        out.theta_acceptance.record(accepted);
        if let Some(a) = &settings.adaptation {
            log_scale = a.step(log_scale, i, accepted);
        }
        out.theta.push(theta.natural.clone());
        out.log_lik.push(log_lik);
    }
    if settings.adaptation.is_some() {
        out.adapted_scales = vec![log_scale.exp()];
    }
    out.elapsed = start.elapsed();
    Ok(out)
}

/// Pseudo-marginal Metropolis–Hastings with fresh variates every iteration:
/// [`cpmmh_run`] with `ρ = 0`.
pub fn pmmh_run<T: Real, E: LikelihoodEstimator<T> + ?Sized>(
    estimator: &E,
    transform: &ParamTransform,
    prior: &Prior<T>,
    settings: &PmSettings<T>,
    streams: &Streams,
    workers: &Workers,
) -> Result<ChainOutput<T>> {
    let kernel = CnKernel::new(T::zero())?;
    cpmmh_run(estimator, transform, prior, settings, &kernel, streams, workers)
}
