//! Linear noise approximation: ODEs for the deterministic path `η`, the
//! residual covariance `V` and the fundamental matrix `P`, a Kalman-type
//! forward filter for the approximate marginal likelihood, a backward
//! sampler for `x^o`, and a Metropolis–Hastings scheme on the LNA posterior.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, Cholesky, Mat};
use crate::parallel::Workers;
use crate::prior::Prior;
use crate::rng::{fill_normal, Streams};
use crate::samplers::{cpmmh_run, ChainOutput, CnKernel, LikelihoodEstimator, PmSettings};
use crate::scalar::Real;
use crate::sde::{Diffusion, InitialState, ObservationModel, ParamTransform, ParamVector};

pub const DEFAULT_RK4_STEPS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct LnaState<T> {
    pub eta: Vec<T>,
    pub m_resid: Vec<T>,
    pub v: Mat<T>,
    pub p: Mat<T>,
    pub t: T,
}

impl<T: Real> LnaState<T> {
    /// State at the start of an interval: `η = a`, `V = C`, `P = I`, `m = 0`.
    pub fn start(a: &[T], c: &Mat<T>, t: T) -> Self {
        let d = a.len();
        Self {
            eta: a.to_vec(),
            m_resid: vec![T::zero(); d],
            v: c.clone(),
            p: Mat::identity(d),
            t,
        }
    }
}

/// Time derivatives of every [`LnaState`] component.
#[derive(Debug, Clone, PartialEq)]
pub struct LnaDerivative<T> {
    pub eta: Vec<T>,
    pub m_resid: Vec<T>,
    pub v: Mat<T>,
    pub p: Mat<T>,
    /// True when `β` had to be evaluated at a clamped `η`.
    pub clamped: bool,
}

/// `α(η)`, `H`, `dV/dt` and whether `η` was clamped into the domain for `β`.
type RhsParts<T> = (Vec<T>, Mat<T>, Mat<T>, bool);

fn rhs_parts<T: Real>(model: &dyn Diffusion<T>, eta: &[T], v: &Mat<T>, theta: &[T]) -> Result<RhsParts<T>> {
    let d = eta.len();
    let mut alpha = vec![T::zero(); d];
    model.drift(eta, theta, &mut alpha);
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFiniteDrift);
    }
    let mut h = Mat::zeros(d, d);
    model.jacobian(eta, theta, &mut h);
    if !h.is_finite() {
        return Err(Error::NonFiniteJacobian);
    }
    let mut at = eta.to_vec();
    let clamped = model.domain().clamp(&mut at);
    let mut beta = Mat::zeros(d, d);
    model.diffusion(&at, theta, &mut beta);
    if !beta.is_finite() {
        return Err(Error::NonFiniteDrift);
    }
    let vh = v.matmul(&h.transpose());
    let dv = vh.add(&beta).add(&h.matmul(v));
    Ok((alpha, h, dv, clamped))
}

/// `dη = α(η)`, `dm = H m`, `dV = V Hᵀ + β(η) + H V`, `dP = H P`, with `H`
/// the drift Jacobian at `η`.
pub fn lna_ode_rhs<T: Real>(
    model: &dyn Diffusion<T>,
    state: &LnaState<T>,
    theta: &ParamVector<T>,
) -> Result<LnaDerivative<T>> {
    let (eta, h, v, clamped) = rhs_parts(model, &state.eta, &state.v, &theta.natural)?;
    Ok(LnaDerivative {
        eta,
        m_resid: h.mul_vec(&state.m_resid),
        p: h.matmul(&state.p),
        v,
        clamped,
    })
}

/// Result of integrating over one unit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct LnaPrediction<T> {
    pub eta: Vec<T>,
    pub v: Mat<T>,
    pub p: Mat<T>,
    pub clamp_events: usize,
}

fn axpy<T: Real>(x: &[T], h: T, dx: &[T]) -> Vec<T> {
    x.iter().zip(dx).map(|(&a, &b)| a + h * b).collect()
}

fn maxpy<T: Real>(x: &Mat<T>, h: T, dx: &Mat<T>) -> Mat<T> {
    x.add(&dx.scaled(h))
}

/// Fixed-step RK4 over `[t, t+1]` from `η = a`, `V = C`, `P = I`. The
/// residual mean stays at zero and is not integrated.
pub fn integrate_lna<T: Real>(
    model: &dyn Diffusion<T>,
    theta: &ParamVector<T>,
    a: &[T],
    c: &Mat<T>,
    steps: usize,
) -> Result<LnaPrediction<T>> {
    if steps == 0 {
        return Err(Error::InvalidConfig("LNA integration needs at least one step".into()));
    }
    let th = &theta.natural;
    let h = T::one() / T::of_usize(steps);
    let half = h * T::of(0.5);
    let sixth = h / T::of(6.0);
    let two = T::of(2.0);
    let mut eta = a.to_vec();
    let mut v = c.clone();
    v.symmetrize();
    let mut p = Mat::identity(a.len());
    let mut clamp_events = 0;

    let mut stage = |eta: &[T], v: &Mat<T>, p: &Mat<T>| -> Result<(Vec<T>, Mat<T>, Mat<T>)> {
        let mut v = v.clone();
        debug_assert!(v.max_asymmetry() <= T::of(1e-9) * (T::one() + v.frobenius()));
        v.symmetrize();
        let (de, hm, dv, clamped) = rhs_parts(model, eta, &v, th)?;
        clamp_events += usize::from(clamped);
        Ok((de, dv, hm.matmul(p)))
    };

    for _ in 0..steps {
        let (e1, v1, p1) = stage(&eta, &v, &p)?;
        let (e2, v2, p2) = stage(&axpy(&eta, half, &e1), &maxpy(&v, half, &v1), &maxpy(&p, half, &p1))?;
        let (e3, v3, p3) = stage(&axpy(&eta, half, &e2), &maxpy(&v, half, &v2), &maxpy(&p, half, &p2))?;
        let (e4, v4, p4) = stage(&axpy(&eta, h, &e3), &maxpy(&v, h, &v3), &maxpy(&p, h, &p3))?;
        for i in 0..eta.len() {
            eta[i] = eta[i] + sixth * (e1[i] + two * e2[i] + two * e3[i] + e4[i]);
        }
        let dv = v1.add(&v2.scaled(two)).add(&v3.scaled(two)).add(&v4);
        v = maxpy(&v, sixth, &dv);
        v.symmetrize();
        let dp = p1.add(&p2.scaled(two)).add(&p3.scaled(two)).add(&p4);
        p = maxpy(&p, sixth, &dp);
        if eta.iter().any(|x| !x.is_finite()) || !v.is_finite() || !p.is_finite() {
            return Err(Error::StepFailure);
        }
    }
    Ok(LnaPrediction {
        eta,
        v,
        p,
        clamp_events,
    })
}

/// Stored output of [`lna_forward_filter`]. `a[t]`, `c[t]` are the filtered
/// moments of `X_{t+1}`; `eta[t]`, `v[t]`, `p[t]` are the one-step predictions
/// for `X_{t+2}` made from time `t+1` (`t = 0..n-1`).
#[derive(Debug, Clone)]
pub struct FilterRecord<T> {
    pub a: Vec<Vec<T>>,
    pub c: Vec<Mat<T>>,
    pub eta: Vec<Vec<T>>,
    pub v: Vec<Mat<T>>,
    pub p: Vec<Mat<T>>,
    /// `ln p(y_{1:t})` after each observation.
    pub log_lik_path: Vec<T>,
    pub clamp_events: usize,
}

impl<T: Real> FilterRecord<T> {
    pub fn log_lik(&self) -> T {
        self.log_lik_path.last().copied().unwrap_or_else(T::zero)
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }
}

/// Forecast log density and Gaussian conditioning of `(η, V)` on `y`.
fn condition<T: Real>(obs: &ObservationModel<T>, y: &[T], eta: &[T], v: &Mat<T>) -> Result<(T, Vec<T>, Mat<T>)> {
    let f = obs.f();
    let vf = v.matmul(f);
    let s = f.transpose().matmul(&vf).add(obs.sigma());
    let chol = Cholesky::with_jitter(&s).ok_or(Error::SingularForecastCov)?;
    let mean = obs.project(eta);
    let log_density = chol.log_density(y, &mean);
    let innovation: Vec<T> = y.iter().zip(&mean).map(|(&a, &b)| a - b).collect();
    let gain_t = chol.solve_mat(&vf.transpose());
    let a = axpy(eta, T::one(), &gain_t.tr_mul_vec(&innovation));
    let mut c = v.sub(&vf.matmul(&gain_t));
    c.symmetrize();
    Ok((log_density, a, c))
}

/// Forward filter under the LNA with `X_1 ~ N(a, C)` a priori. Returns
/// `ln p^(a)(y | θ)` and the stored moments.
#[allow(clippy::too_many_arguments)]
pub fn lna_forward_filter<T: Real>(
    model: &dyn Diffusion<T>,
    obs: &ObservationModel<T>,
    data: &[Vec<T>],
    theta: &ParamVector<T>,
    prior_a: &[T],
    prior_c: &Mat<T>,
    steps: usize,
) -> Result<(T, FilterRecord<T>)> {
    let n = data.len();
    if n == 0 {
        return Err(Error::InvalidConfig("no observations".into()));
    }
    let mut rec = FilterRecord {
        a: Vec::with_capacity(n),
        c: Vec::with_capacity(n),
        eta: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        p: Vec::with_capacity(n),
        log_lik_path: Vec::with_capacity(n),
        clamp_events: 0,
    };
    let (ld, a, c) = condition(obs, &data[0], prior_a, prior_c)?;
    let mut log_lik = ld;
    rec.a.push(a);
    rec.c.push(c);
    rec.log_lik_path.push(log_lik);
    for y in &data[1..] {
        let pred = integrate_lna(model, theta, rec.a.last().unwrap(), rec.c.last().unwrap(), steps)?;
        rec.clamp_events += pred.clamp_events;
        let (ld, a, c) = condition(obs, y, &pred.eta, &pred.v)?;
        log_lik = log_lik + ld;
        rec.a.push(a);
        rec.c.push(c);
        rec.eta.push(pred.eta);
        rec.v.push(pred.v);
        rec.p.push(pred.p);
        rec.log_lik_path.push(log_lik);
    }
    Ok((log_lik, rec))
}

fn draw_gaussian<T: Real>(mean: &[T], cov: &Mat<T>, rng: &mut dyn RngCore) -> Vec<T> {
    let mut z = vec![T::zero(); mean.len()];
    fill_normal(rng, &mut z);
    let mut c = cov.clone();
    c.symmetrize();
    axpy(mean, T::one(), &psd_sqrt(&c).mul_vec(&z))
}

/// Draws `x^o = (x_1, …, x_n)` from the LNA smoothing distribution.
pub fn lna_backward_sampler<T: Real>(record: &FilterRecord<T>, rng: &mut dyn RngCore) -> Result<Vec<Vec<T>>> {
    let n = record.n();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut out = vec![Vec::new(); n];
    out[n - 1] = draw_gaussian(&record.a[n - 1], &record.c[n - 1], rng);
    for t in (0..n - 1).rev() {
        let chol = Cholesky::with_jitter(&record.v[t]).ok_or(Error::SingularV)?;
        let c = &record.c[t];
        // G = C Pᵀ V⁻¹, obtained as (V⁻¹ P C)ᵀ.
        let g = chol.solve_mat(&record.p[t].matmul(c)).transpose();
        let diff: Vec<T> = out[t + 1].iter().zip(&record.eta[t]).map(|(&x, &e)| x - e).collect();
        let mean = axpy(&record.a[t], T::one(), &g.mul_vec(&diff));
        let cov = c.sub(&g.matmul(&record.p[t]).matmul(c));
        out[t] = draw_gaussian(&mean, &cov, rng);
    }
    Ok(out)
}

/// How the time-1 prior `X_1 ~ N(a, C)` of the filter is formed.
#[derive(Debug, Clone)]
pub enum LnaPrior<T> {
    Fixed {
        a: Vec<T>,
        c: Mat<T>,
    },
    /// Push the `x_0` distribution through the LNA over `[0, 1]` at the
    /// current `θ`.
    FromInitialState(InitialState<T>),
}

impl<T: Real> LnaPrior<T> {
    pub fn moments(&self, model: &dyn Diffusion<T>, theta: &ParamVector<T>, steps: usize) -> Result<(Vec<T>, Mat<T>)> {
        match self {
            LnaPrior::Fixed { a, c } => Ok((a.clone(), c.clone())),
            LnaPrior::FromInitialState(init) => {
                let pred = integrate_lna(model, theta, init.mean(), &init.covariance(), steps)?;
                Ok((pred.eta, pred.v))
            }
        }
    }
}

/// The LNA marginal likelihood as a (noise-free) [`LikelihoodEstimator`].
pub struct LnaEstimator<'a, T: Real> {
    pub model: &'a dyn Diffusion<T>,
    pub obs: &'a ObservationModel<T>,
    pub data: &'a [Vec<T>],
    pub prior: LnaPrior<T>,
    pub steps: usize,
}

impl<T: Real> LnaEstimator<'_, T> {
    pub fn filter(&self, theta: &ParamVector<T>) -> Result<(T, FilterRecord<T>)> {
        let (a, c) = self.prior.moments(self.model, theta, self.steps)?;
        lna_forward_filter(self.model, self.obs, self.data, theta, &a, &c, self.steps)
    }
}

impl<T: Real> LikelihoodEstimator<T> for LnaEstimator<'_, T> {
    fn aux_len(&self, _particles: usize) -> usize {
        0
    }

    fn log_likelihood(&self, theta: &ParamVector<T>, _u: &[T], _particles: usize, _workers: &Workers) -> Result<T> {
        self.filter(theta).map(|(ll, _)| ll)
    }
}

/// Draws and moment summaries of an LNA Metropolis–Hastings run. Moments
/// are taken over the retained draws after discarding the first `burn_in`.
#[derive(Debug, Clone)]
pub struct LnaMhOutput<T> {
    pub chain: ChainOutput<T>,
    pub burn_in: usize,
    pub theta_work_mean: Vec<T>,
    pub theta_work_cov: Mat<T>,
    pub theta_mean: Vec<T>,
    /// Per-time posterior mean and covariance of `x_t`, `t = 1..=n`.
    pub x_mean: Vec<Vec<T>>,
    pub x_cov: Vec<Mat<T>>,
}

/// Sample mean and covariance (divisor `L − 1`) of equal-length rows.
pub fn sample_moments<T: Real>(rows: &[Vec<T>]) -> (Vec<T>, Mat<T>) {
    let len = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    let mut mean = vec![T::zero(); p];
    for r in rows {
        for (m, &v) in mean.iter_mut().zip(r) {
            *m = *m + v;
        }
    }
    let lf = T::of_usize(len.max(1));
    mean.iter_mut().for_each(|m| *m = *m / lf);
    let mut cov = Mat::zeros(p, p);
    for r in rows {
        for i in 0..p {
            for j in 0..p {
                cov[(i, j)] = cov[(i, j)] + (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    let denom = T::of_usize(len.saturating_sub(1).max(1));
    (mean, cov.scaled(T::one() / denom))
}

/// Metropolis–Hastings on `π(θ) p^(a)(y | θ)`, with one backward-sampled
/// `x^o` per `thin`-th iteration.
pub fn lna_mh_run<T: Real>(
    estimator: &LnaEstimator<'_, T>,
    transform: &ParamTransform,
    prior: &Prior<T>,
    settings: &PmSettings<T>,
    thin: usize,
    burn_in: usize,
    streams: &Streams,
) -> Result<LnaMhOutput<T>> {
    if settings.n_iters == 0 {
        return Err(Error::InvalidConfig("n_iters must be positive".into()));
    }
    let thin = thin.max(1);
    let kernel = CnKernel::new(T::one())?;
    let mut chain = cpmmh_run(
        estimator,
        transform,
        prior,
        settings,
        &kernel,
        streams,
        &Workers::serial(),
    )?;
    let d = estimator.model.state_dim();
    let n = estimator.data.len();
    let mut x_rows: Vec<Vec<Vec<T>>> = Vec::new();
    for i in (0..settings.n_iters).filter(|i| (i + 1) % thin == 0) {
        let theta = ParamVector::from_natural(&chain.theta[i], transform);
        let (_, record) = estimator.filter(&theta)?;
        let x = lna_backward_sampler(&record, &mut streams.fork(1).stream(i as u64, 0, 0))?;
        chain.x_o.push(x.concat());
        chain.x_o_iterations.push(i);
        if i >= burn_in {
            x_rows.push(x);
        }
    }
    let kept: Vec<Vec<T>> = chain.theta[burn_in.min(chain.theta.len() - 1)..]
        .iter()
        .map(|t| transform.to_work(t))
        .collect();
    let (theta_work_mean, theta_work_cov) = sample_moments(&kept);
    let natural: Vec<Vec<T>> = chain.theta[burn_in.min(chain.theta.len() - 1)..].to_vec();
    let (theta_mean, _) = sample_moments(&natural);
    let mut x_mean = Vec::with_capacity(n);
    let mut x_cov = Vec::with_capacity(n);
    for t in 0..n {
        let rows: Vec<Vec<T>> = x_rows.iter().map(|x| x[t].clone()).collect();
        let (m, c) = if rows.is_empty() {
            (vec![T::nan(); d], Mat::zeros(d, d))
        } else {
            sample_moments(&rows)
        };
        x_mean.push(m);
        x_cov.push(c);
    }
    Ok(LnaMhOutput {
        chain,
        burn_in,
        theta_work_mean,
        theta_work_cov,
        theta_mean,
        x_mean,
        x_cov,
    })
}
