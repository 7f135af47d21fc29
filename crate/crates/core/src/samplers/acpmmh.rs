use std::time::Instant;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::filter::numeric_to_neg_inf;
use crate::importance::{estimate_initial, estimate_joint, estimate_transition, Innovations};
use crate::parallel::Workers;
use crate::prior::Prior;
use crate::rng::{uniform, Streams};
use crate::scalar::Real;
use crate::sde::{ParamTransform, ParamVector, Problem};

use super::cn::CnKernel;
use super::output::ChainOutput;
use super::proposal::RwmProposal;
use super::pseudo_marginal::{Adaptation, INIT_ATTEMPTS};
use super::schedule::odd_even_schedule;
use super::{mh_accept, tags};

/// Current point of the augmented chain with cached target terms.
///
/// `x_o[j]` is `x_{j+1}`; `interval_log_est[j]` is the log estimate for the
/// interval `x_j → x_{j+1}` (with `j = 0` the initial term); `obs_log_density[j]`
/// is `ln p(y_{j+1} | x_{j+1})`.
#[derive(Debug, Clone)]
pub struct ChainState<T: Real> {
    pub theta: ParamVector<T>,
    pub log_prior: T,
    pub x_o: Vec<Vec<T>>,
    pub u: Innovations<T>,
    pub interval_log_est: Vec<T>,
    pub obs_log_density: Vec<T>,
}

impl<T: Real> ChainState<T> {
    pub fn new(
        problem: &Problem<'_, T>,
        prior: &Prior<T>,
        theta: ParamVector<T>,
        x_o: Vec<Vec<T>>,
        u: Innovations<T>,
        workers: &Workers,
    ) -> Result<Self> {
        let log_prior = prior.log_density(&theta.work);
        let mut state = Self {
            theta,
            log_prior,
            x_o,
            u,
            interval_log_est: Vec::new(),
            obs_log_density: Vec::new(),
        };
        let (est, obs) = state.recompute(problem, workers)?;
        state.interval_log_est = est;
        state.obs_log_density = obs;
        Ok(state)
    }

    /// Per-interval estimates and observation log densities from scratch.
    pub fn recompute(&self, problem: &Problem<'_, T>, workers: &Workers) -> Result<(Vec<T>, Vec<T>)> {
        let est = estimate_joint(problem, &self.x_o, &self.theta, &self.u, workers)?;
        let obs = problem
            .data
            .iter()
            .zip(&self.x_o)
            .map(|(y, x)| numeric_to_neg_inf(problem.obs.log_density(y, x)))
            .collect::<Result<Vec<T>>>()?;
        Ok((est, obs))
    }

    /// True when the caches equal a fresh recomputation bit for bit.
    pub fn caches_coherent(&self, problem: &Problem<'_, T>, workers: &Workers) -> Result<bool> {
        let (est, obs) = self.recompute(problem, workers)?;
        let same = |a: &[T], b: &[T]| a.iter().zip(b).all(|(x, y)| x.to_bits_eq(*y));
        Ok(same(&est, &self.interval_log_est) && same(&obs, &self.obs_log_density))
    }

    /// `ln p̂(x^o | θ) + ln p(y | x^o)`.
    pub fn log_joint_estimate(&self) -> T {
        self.interval_log_est.iter().copied().sum::<T>() + self.obs_log_density.iter().copied().sum::<T>()
    }

    pub fn is_finite(&self) -> bool {
        self.log_prior.is_finite() && self.log_joint_estimate().is_finite()
    }
}

trait BitsEq {
    fn to_bits_eq(self, other: Self) -> bool;
}

impl<T: Real> BitsEq for T {
    fn to_bits_eq(self, other: Self) -> bool {
        self == other || (self.is_nan() && other.is_nan())
    }
}

/// Log acceptance ratio of a `θ` move holding `x^o` and `u` fixed, together
/// with the candidate's per-interval estimates. The observation terms do not
/// depend on `θ` and cancel.
pub fn acpmmh_theta_log_ratio<T: Real>(
    state: &ChainState<T>,
    problem: &Problem<'_, T>,
    prior: &Prior<T>,
    candidate: &ParamVector<T>,
    workers: &Workers,
) -> Result<(T, Vec<T>)> {
    let lp = prior.log_density(&candidate.work);
    if lp == T::neg_infinity() || !candidate.is_finite() {
        return Ok((T::neg_infinity(), Vec::new()));
    }
    let est = estimate_joint(problem, &state.x_o, candidate, &state.u, workers)?;
    let new: T = est.iter().copied().sum();
    let old: T = state.interval_log_est.iter().copied().sum();
    let ratio = if new == T::neg_infinity() {
        T::neg_infinity()
    } else {
        lp - state.log_prior + new - old
    };
    Ok((ratio, est))
}

#[allow(clippy::too_many_arguments)]
pub fn acpmmh_theta_update<T: Real>(
    state: &mut ChainState<T>,
    problem: &Problem<'_, T>,
    transform: &ParamTransform,
    prior: &Prior<T>,
    proposal: &RwmProposal<T>,
    scale: T,
    rng: &mut dyn RngCore,
    workers: &Workers,
) -> Result<bool> {
    let work = proposal.propose_scaled(&state.theta.work, scale, rng);
    let log_u = uniform::<T, _>(rng).ln();
    let candidate = transform.params(&work);
    let (ratio, est) = acpmmh_theta_log_ratio(state, problem, prior, &candidate, workers)?;
    if !mh_accept(ratio, log_u) {
        return Ok(false);
    }
    state.log_prior = prior.log_density(&candidate.work);
    state.theta = candidate;
    state.interval_log_est = est;
    Ok(true)
}

/// A proposed single-site move of `x_t` with its recomputed target terms.
struct StateMove<T> {
    t: usize,
    x: Vec<T>,
    u_prev: Vec<T>,
    u_next: Option<Vec<T>>,
    est_prev: T,
    est_next: Option<T>,
    obs: T,
    accepted: bool,
}

fn propose_state_move<T: Real>(
    state: &ChainState<T>,
    problem: &Problem<'_, T>,
    t: usize,
    proposal: &RwmProposal<T>,
    scale: T,
    kernel: &CnKernel<T>,
    rng: &mut dyn RngCore,
) -> Result<StateMove<T>> {
    let n = problem.n();
    if t == 0 || t > n {
        return Err(Error::Shape(format!("time {t} outside 1..={n}")));
    }
    let m = problem.grid.m;
    let particles = state.u.particles();
    let x = proposal.propose_scaled(&state.x_o[t - 1], scale, rng);
    let u_prev = kernel.propose(state.u.block(t - 1), rng);
    let u_next = (t < n).then(|| kernel.propose(state.u.block(t), rng));
    let log_u = uniform::<T, _>(rng).ln();

    let mut mv = StateMove {
        t,
        x,
        u_prev,
        u_next,
        est_prev: T::neg_infinity(),
        est_next: None,
        obs: T::neg_infinity(),
        accepted: false,
    };
    if !problem.model.domain().contains(&mv.x) || mv.x.iter().any(|v| !v.is_finite()) {
        return Ok(mv);
    }
    mv.est_prev = if t == 1 {
        estimate_initial(
            problem.model,
            problem.init,
            &mv.x,
            &state.theta,
            m,
            &mv.u_prev,
            particles,
        )?
    } else {
        estimate_transition(
            problem.model,
            &state.x_o[t - 2],
            &mv.x,
            &state.theta,
            m,
            &mv.u_prev,
            particles,
            t - 1,
        )?
    }
    .log_value;
    if let Some(u_next) = &mv.u_next {
        let e = estimate_transition(
            problem.model,
            &mv.x,
            &state.x_o[t],
            &state.theta,
            m,
            u_next,
            particles,
            t,
        )?;
        mv.est_next = Some(e.log_value);
    }
    mv.obs = numeric_to_neg_inf(problem.obs.log_density(&problem.data[t - 1], &mv.x))?;

    let mut new = mv.est_prev + mv.obs;
    let mut old = state.interval_log_est[t - 1] + state.obs_log_density[t - 1];
    if let Some(e) = mv.est_next {
        new = new + e;
        old = old + state.interval_log_est[t];
    }
    mv.accepted = new > T::neg_infinity() && mh_accept(new - old, log_u);
    Ok(mv)
}

fn apply_state_move<T: Real>(state: &mut ChainState<T>, mv: StateMove<T>) -> bool {
    if !mv.accepted {
        return false;
    }
    let t = mv.t;
    state.x_o[t - 1] = mv.x;
    state.u.set_block(t - 1, &mv.u_prev);
    state.interval_log_est[t - 1] = mv.est_prev;
    state.obs_log_density[t - 1] = mv.obs;
    if let (Some(u), Some(e)) = (mv.u_next, mv.est_next) {
        state.u.set_block(t, &u);
        state.interval_log_est[t] = e;
    }
    true
}

/// Joint move of an interior `x_t` (1 ≤ t ≤ n−1) and the innovations of the
/// two intervals that touch it.
#[allow(clippy::too_many_arguments)]
pub fn acpmmh_xt_update<T: Real>(
    state: &mut ChainState<T>,
    problem: &Problem<'_, T>,
    t: usize,
    proposal: &RwmProposal<T>,
    scale: T,
    kernel: &CnKernel<T>,
    rng: &mut dyn RngCore,
) -> Result<bool> {
    if t == 0 || t >= problem.n() {
        return Err(Error::Shape(format!("x_t update needs 1 <= t < n, got {t}")));
    }
    let mv = propose_state_move(state, problem, t, proposal, scale, kernel, rng)?;
    Ok(apply_state_move(state, mv))
}

/// Joint move of `x_n` and the innovations of the last interval.
pub fn acpmmh_endpoint_update<T: Real>(
    state: &mut ChainState<T>,
    problem: &Problem<'_, T>,
    proposal: &RwmProposal<T>,
    scale: T,
    kernel: &CnKernel<T>,
    rng: &mut dyn RngCore,
) -> Result<bool> {
    let mv = propose_state_move(state, problem, problem.n(), proposal, scale, kernel, rng)?;
    Ok(apply_state_move(state, mv))
}

#[derive(Debug, Clone)]
pub struct AcpmmhSettings<T> {
    pub particles: usize,
    pub n_iters: usize,
    pub kernel: CnKernel<T>,
    pub theta_proposal: RwmProposal<T>,
    /// One proposal per time `1..=n`, or a single one shared by all times.
    pub state_proposals: Vec<RwmProposal<T>>,
    /// Initial parameters on the working scale.
    pub theta0: Vec<T>,
    pub x_o0: Vec<Vec<T>>,
    /// Store `x^o` every `x_thin` iterations; 0 stores nothing.
    pub x_thin: usize,
    pub theta_adaptation: Option<Adaptation>,
    pub state_adaptation: Option<Adaptation>,
}

/// Runs the augmented correlated scheme: per iteration a `θ` update, a sweep
/// over odd interior times, a sweep over even interior times and the
/// endpoint update. Sweep members are proposed concurrently and applied in
/// order, so the chain is identical for any worker count.
pub fn acpmmh_run<T: Real>(
    problem: &Problem<'_, T>,
    transform: &ParamTransform,
    prior: &Prior<T>,
    settings: &AcpmmhSettings<T>,
    streams: &Streams,
    workers: &Workers,
) -> Result<ChainOutput<T>> {
    let n = problem.n();
    let d = problem.d();
    if settings.particles == 0 {
        return Err(Error::InvalidConfig("need at least one particle".into()));
    }
    if n == 0 {
        return Err(Error::InvalidConfig("no observations".into()));
    }
    if settings.x_o0.len() != n || settings.x_o0.iter().any(|x| x.len() != d) {
        return Err(Error::Shape("initial latent states have the wrong shape".into()));
    }
    let sp = &settings.state_proposals;
    if !(sp.len() == 1 || sp.len() == n) || sp.iter().any(|p| p.dim() != d) {
        return Err(Error::Shape(
            "state proposals must be one shared or one per time".into(),
        ));
    }
    if settings.theta_proposal.dim() != transform.dim() || settings.theta0.len() != transform.dim() {
        return Err(Error::Shape("parameter proposal has the wrong dimension".into()));
    }
    let domain = problem.model.domain();
    if settings
        .x_o0
        .iter()
        .any(|x| !domain.contains(x) || x.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::InvalidConfig(
            "initial latent states are outside the state domain".into(),
        ));
    }
    let start = Instant::now();
    let theta = transform.params(&settings.theta0);
    if !prior.log_density(&theta.work).is_finite() || !theta.is_finite() {
        return Err(Error::InvalidConfig(
            "initial parameters lie outside the prior support".into(),
        ));
    }

    let mut state = None;
    for attempt in 0..INIT_ATTEMPTS {
        let mut rng = streams.stream(tags::INIT_ITER, tags::INIT, attempt);
        let u = Innovations::standard(n, settings.particles, problem.grid.m, d, &mut rng);
        let s = ChainState::new(problem, prior, theta.clone(), settings.x_o0.clone(), u, workers)?;
        if s.is_finite() {
            state = Some(s);
            break;
        }
    }
    let mut state = state.ok_or(Error::InitFailure {
        attempts: INIT_ATTEMPTS as usize,
    })?;

    let proposal_for = |t: usize| if sp.len() == 1 { &sp[0] } else { &sp[t - 1] };
    let schedule = odd_even_schedule(n);
    let mut out = ChainOutput {
        theta: Vec::with_capacity(settings.n_iters),
        log_lik: Vec::with_capacity(settings.n_iters),
        ..ChainOutput::default()
    };
    let mut theta_log_scale = 0.0_f64;
    let mut state_log_scale = vec![0.0_f64; n];

    for i in 0..settings.n_iters {
        let iter = i as u64;
        let mut rng = streams.stream(iter, tags::THETA, 0);
        let acc = acpmmh_theta_update(
            &mut state,
            problem,
            transform,
            prior,
            &settings.theta_proposal,
            T::of(theta_log_scale.exp()),
            &mut rng,
            workers,
        )?;
        out.theta_acceptance.record(acc);
        if let Some(a) = &settings.theta_adaptation {
            theta_log_scale = a.step(theta_log_scale, i, acc);
        }

        for sweep in [&schedule.odd, &schedule.even] {
            let current = &state;
            let moves = workers.map(sweep.len(), |k| {
                let t = sweep[k];
                let mut rng = streams.stream(iter, tags::STATE, t as u64);
                propose_state_move(
                    current,
                    problem,
                    t,
                    proposal_for(t),
                    T::of(state_log_scale[t - 1].exp()),
                    &settings.kernel,
                    &mut rng,
                )
            });
            for mv in moves {
                let mv = mv?;
                let t = mv.t;
                let acc = apply_state_move(&mut state, mv);
                out.state_acceptance.record(acc);
                if let Some(a) = &settings.state_adaptation {
                    state_log_scale[t - 1] = a.step(state_log_scale[t - 1], i, acc);
                }
            }
        }

        let mut rng = streams.stream(iter, tags::ENDPOINT, 0);
        let acc = acpmmh_endpoint_update(
            &mut state,
            problem,
            proposal_for(n),
            T::of(state_log_scale[n - 1].exp()),
            &settings.kernel,
            &mut rng,
        )?;
        out.endpoint_acceptance.record(acc);
        if let Some(a) = &settings.state_adaptation {
            state_log_scale[n - 1] = a.step(state_log_scale[n - 1], i, acc);
        }

        out.theta.push(state.theta.natural.clone());
        out.log_lik.push(state.log_joint_estimate());
        if settings.x_thin > 0 && (i + 1) % settings.x_thin == 0 {
            out.x_o.push(state.x_o.concat());
            out.x_o_iterations.push(i);
        }
    }
    if settings.theta_adaptation.is_some() || settings.state_adaptation.is_some() {
        out.adapted_scales = std::iter::once(theta_log_scale.exp())
            .chain(state_log_scale.iter().map(|s| s.exp()))
            .collect();
    }
    out.elapsed = start.elapsed();
    Ok(out)
}
