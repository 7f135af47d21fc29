//! Pilot runs that supply initial values and random-walk covariances for
//! the main augmented run: option 1 uses the LNA posterior, option 2 a
//! short adaptive aCPMMH run started from the data.

use crate::bridge::bridge_path_from_data;
use crate::diagnostics::rwm_variance;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::lna::{lna_mh_run, sample_moments, LnaEstimator, LnaPrior, DEFAULT_RK4_STEPS};
use crate::parallel::Workers;
use crate::prior::Prior;
use crate::rng::{normal_vec, Streams};
use crate::samplers::{acpmmh_run, AcpmmhSettings, Adaptation, CnKernel, PmSettings, RwmProposal};
use crate::scalar::Real;
use crate::sde::{ParamTransform, Problem, StateDomain};

/// Initial values and proposal covariances for a main run.
#[derive(Debug, Clone)]
pub struct TuningResult<T> {
    /// Posterior mean of `θ` on the working scale.
    pub theta_init_work: Vec<T>,
    pub theta_init: Vec<T>,
    pub x_o_init: Vec<Vec<T>>,
    pub omega_theta: Mat<T>,
    /// One `d × d` covariance per time `1..=n`.
    pub omega_x: Vec<Mat<T>>,
    pub n_selected: usize,
    pub pilot_iterations: usize,
    pub pilot_acceptance: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct PilotSettings<T> {
    pub iterations: usize,
    /// Starting parameters on the working scale.
    pub theta0_work: Vec<T>,
    /// Starting random-walk variance for every working-scale component.
    pub theta_step_variance: T,
    /// Starting random-walk variance for every state component.
    pub state_step_variance: T,
    pub theta_target: f64,
    pub state_target: f64,
    /// Fraction of pilot draws discarded before taking moments.
    pub burn_in_fraction: f64,
    pub lna_steps: usize,
}

impl<T: Real> PilotSettings<T> {
    pub fn new(iterations: usize, theta0_work: Vec<T>) -> Self {
        Self {
            iterations,
            theta0_work,
            theta_step_variance: T::of(0.01),
            state_step_variance: T::one(),
            theta_target: 0.25,
            state_target: 0.25,
            burn_in_fraction: 0.2,
            lna_steps: DEFAULT_RK4_STEPS,
        }
    }

    fn burn_in(&self) -> usize {
        ((self.iterations as f64) * self.burn_in_fraction).floor() as usize
    }
}

/// Offset from the domain boundary used when clamping starting states.
pub const BOUNDARY_OFFSET: f64 = 1e-3;

/// Moves `x` inside the domain, at least [`BOUNDARY_OFFSET`] from a bound it
/// violated or touched. Interior values are unchanged.
pub fn clamp_into_domain<T: Real>(domain: &StateDomain<T>, x: &mut [T]) {
    let eps = T::of(BOUNDARY_OFFSET);
    for (v, (&lo, &hi)) in x.iter_mut().zip(domain.lower.iter().zip(&domain.upper)) {
        if *v <= lo {
            *v = lo + eps * (T::one() + lo.abs());
        } else if *v >= hi {
            *v = hi - eps * (T::one() + hi.abs());
        }
    }
}

/// Floors the diagonal of a pilot covariance so a chain that never moved
/// still yields a usable proposal.
fn floored<T: Real>(cov: Mat<T>, floor: T) -> Mat<T> {
    let mut c = cov;
    for i in 0..c.rows() {
        if !(c[(i, i)] > floor) {
            c[(i, i)] = floor;
        }
    }
    c
}

const COV_FLOOR: f64 = 1e-8;

/// Option 1: an adaptive LNA Metropolis–Hastings pilot. `θ` and `x^o` start
/// at their LNA posterior means; covariances follow the `2.56²/p` rule.
pub fn tune_option1<T: Real>(
    problem: &Problem<'_, T>,
    transform: &ParamTransform,
    prior: &Prior<T>,
    pilot: &PilotSettings<T>,
    streams: &Streams,
) -> Result<TuningResult<T>> {
    if pilot.iterations == 0 {
        return Err(Error::InvalidConfig("pilot needs at least one iteration".into()));
    }
    let p = transform.dim();
    let d = problem.d();
    let estimator = LnaEstimator {
        model: problem.model,
        obs: problem.obs,
        data: problem.data,
        prior: LnaPrior::FromInitialState(problem.init.clone()),
        steps: pilot.lna_steps,
    };
    let settings = PmSettings {
        particles: 1,
        n_iters: pilot.iterations,
        proposal: RwmProposal::new(Mat::identity(p).scaled(pilot.theta_step_variance))?,
        theta0: pilot.theta0_work.clone(),
        adaptation: Some(Adaptation {
            target: pilot.theta_target,
            ..Adaptation::default()
        }),
    };
    let thin = (pilot.iterations / 500).max(1);
    let out = lna_mh_run(&estimator, transform, prior, &settings, thin, pilot.burn_in(), streams)
        .map_err(|e| Error::PilotFailure(format!("LNA pilot: {e}; tuning option 2 avoids the LNA")))?;
    let floor = T::of(COV_FLOOR);
    let omega_theta = rwm_variance(&floored(out.theta_work_cov.clone(), floor), p);
    let omega_x = out
        .x_cov
        .iter()
        .map(|c| rwm_variance(&floored(c.clone(), floor), d))
        .collect();
    let mut x_o_init = out.x_mean.clone();
    for x in &mut x_o_init {
        clamp_into_domain(problem.model.domain(), x);
    }
    Ok(TuningResult {
        theta_init: transform.to_natural(&out.theta_work_mean),
        theta_init_work: out.theta_work_mean,
        x_o_init,
        omega_theta,
        omega_x,
        n_selected: 1,
        pilot_iterations: pilot.iterations,
        pilot_acceptance: vec![("theta".into(), out.chain.theta_acceptance.rate())],
    })
}

/// Starting `x^o` for option 2: the clamped data when the full state is
/// observed, otherwise chained noisy-endpoint bridge draws kept at the
/// observation times.
pub fn initial_states_from_data<T: Real>(
    problem: &Problem<'_, T>,
    transform: &ParamTransform,
    theta0_work: &[T],
    streams: &Streams,
) -> Result<Vec<Vec<T>>> {
    let domain = problem.model.domain();
    if problem.obs.observes_full_state() {
        return Ok(problem
            .data
            .iter()
            .map(|y| {
                let mut x = y.clone();
                clamp_into_domain(domain, &mut x);
                x
            })
            .collect());
    }
    let theta = transform.params(theta0_work);
    let len = problem.n() * problem.grid.m * problem.d();
    let mut last = Error::DomainExit;
    for attempt in 0..100 {
        let u: Vec<T> = normal_vec(&mut streams.stream(attempt, 0, 0), len);
        let mut x0 = problem.init.mean().to_vec();
        clamp_into_domain(domain, &mut x0);
        match bridge_path_from_data(problem.model, problem.obs, problem.data, &x0, &theta, &problem.grid, &u) {
            Ok(mut states) => {
                for x in &mut states {
                    clamp_into_domain(domain, x);
                }
                return Ok(states);
            }
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Option 2: a short adaptive aCPMMH pilot with `N_pilot` importance
/// samples, started from [`initial_states_from_data`].
#[allow(clippy::too_many_arguments)]
pub fn tune_option2<T: Real>(
    problem: &Problem<'_, T>,
    transform: &ParamTransform,
    prior: &Prior<T>,
    pilot: &PilotSettings<T>,
    n_pilot: usize,
    rho: T,
    streams: &Streams,
    workers: &Workers,
) -> Result<TuningResult<T>> {
    if pilot.iterations == 0 {
        return Err(Error::InvalidConfig("pilot needs at least one iteration".into()));
    }
    let p = transform.dim();
    let d = problem.d();
    let n = problem.n();
    let x_o0 = initial_states_from_data(problem, transform, &pilot.theta0_work, &streams.fork(7))?;
    let settings = AcpmmhSettings {
        particles: n_pilot,
        n_iters: pilot.iterations,
        kernel: CnKernel::new(rho)?,
        theta_proposal: RwmProposal::new(Mat::identity(p).scaled(pilot.theta_step_variance))?,
        state_proposals: vec![RwmProposal::new(Mat::identity(d).scaled(pilot.state_step_variance))?],
        theta0: pilot.theta0_work.clone(),
        x_o0,
        x_thin: 1,
        theta_adaptation: Some(Adaptation {
            target: pilot.theta_target,
            ..Adaptation::default()
        }),
        state_adaptation: Some(Adaptation {
            target: pilot.state_target,
            ..Adaptation::default()
        }),
    };
    let out = acpmmh_run(problem, transform, prior, &settings, streams, workers)?;
    let burn = pilot.burn_in().min(pilot.iterations - 1);
    let work: Vec<Vec<T>> = out.theta[burn..].iter().map(|t| transform.to_work(t)).collect();
    let (theta_mean, theta_cov) = sample_moments(&work);
    let floor = T::of(COV_FLOOR);
    let mut x_o_init = Vec::with_capacity(n);
    let mut omega_x = Vec::with_capacity(n);
    for t in 0..n {
        let rows: Vec<Vec<T>> = out.x_o[burn..].iter().map(|r| r[t * d..(t + 1) * d].to_vec()).collect();
        let (mut m, c) = sample_moments(&rows);
        clamp_into_domain(problem.model.domain(), &mut m);
        x_o_init.push(m);
        omega_x.push(rwm_variance(&floored(c, floor), d));
    }
    Ok(TuningResult {
        theta_init: transform.to_natural(&theta_mean),
        theta_init_work: theta_mean,
        x_o_init,
        omega_theta: rwm_variance(&floored(theta_cov, floor), p),
        omega_x,
        n_selected: n_pilot,
        pilot_iterations: pilot.iterations,
        pilot_acceptance: vec![
            ("theta".into(), out.theta_acceptance.rate()),
            ("state".into(), out.state_acceptance.rate()),
            ("endpoint".into(), out.endpoint_acceptance.rate()),
        ],
    })
}
