//! Diffusion models, observation models, the fine time grid and the
//! Euler–Maruyama transition densities built on them.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg::{gaussian_log_density, min_eigenvalue, psd_sqrt, Cholesky, Mat};
use crate::rng::fill_normal;
use crate::scalar::Real;

/// An Itô diffusion `dX = α(X, θ) dt + √β(X, θ) dW` with `θ` on the natural scale.
pub trait Diffusion<T: Real>: Send + Sync {
    fn state_dim(&self) -> usize;

    fn param_dim(&self) -> usize;

    /// Writes `α(x, θ)` into `out` (length `d`).
    fn drift(&self, x: &[T], theta: &[T], out: &mut [T]);

    /// Writes `β(x, θ)` into the `d × d` matrix `out`.
    fn diffusion(&self, x: &[T], theta: &[T], out: &mut Mat<T>);

    /// Jacobian of the drift, `H_ij = ∂α_i/∂x_j`. Central differences unless
    /// the model overrides it.
    fn jacobian(&self, x: &[T], theta: &[T], out: &mut Mat<T>) {
        finite_difference_jacobian(self, x, theta, out);
    }

    fn domain(&self) -> &StateDomain<T>;
}

/// Central-difference drift Jacobian with step `1e-5·(1 + |x_j|)`.
pub fn finite_difference_jacobian<T: Real, M: Diffusion<T> + ?Sized>(
    model: &M,
    x: &[T],
    theta: &[T],
    out: &mut Mat<T>,
) {
    let d = x.len();
    let mut xp = x.to_vec();
    let mut fp = vec![T::zero(); d];
    let mut fm = vec![T::zero(); d];
    for j in 0..d {
        let h = T::of(1e-5) * (T::one() + x[j].abs());
        xp[j] = x[j] + h;
        model.drift(&xp, theta, &mut fp);
        xp[j] = x[j] - h;
        model.drift(&xp, theta, &mut fm);
        xp[j] = x[j];
        for i in 0..d {
            out[(i, j)] = (fp[i] - fm[i]) / (h + h);
        }
    }
}

/// Componentwise box constraints on the state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDomain<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> StateDomain<T> {
    pub fn unbounded(d: usize) -> Self {
        Self {
            lower: vec![T::neg_infinity(); d],
            upper: vec![T::infinity(); d],
        }
    }

    pub fn nonnegative(d: usize) -> Self {
        Self {
            lower: vec![T::zero(); d],
            upper: vec![T::infinity(); d],
        }
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }

    pub fn clamp(&self, x: &mut [T]) -> bool {
        let mut clamped = false;
        for (v, (&lo, &hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            if *v < lo {
                *v = lo;
                clamped = true;
            } else if *v > hi {
                *v = hi;
                clamped = true;
            }
        }
        clamped
    }
}

type DriftFn<T> = dyn Fn(&[T], &[T], &mut [T]) + Send + Sync;
type DiffusionFn<T> = dyn Fn(&[T], &[T], &mut Mat<T>) + Send + Sync;

/// A diffusion assembled from closures; handy for one-off and test models.
pub struct FnDiffusion<T> {
    d: usize,
    p: usize,
    drift: Box<DriftFn<T>>,
    diffusion: Box<DiffusionFn<T>>,
    domain: StateDomain<T>,
}

impl<T: Real> FnDiffusion<T> {
    pub fn new(
        d: usize,
        p: usize,
        drift: impl Fn(&[T], &[T], &mut [T]) + Send + Sync + 'static,
        diffusion: impl Fn(&[T], &[T], &mut Mat<T>) + Send + Sync + 'static,
    ) -> Self {
        Self {
            d,
            p,
            drift: Box::new(drift),
            diffusion: Box::new(diffusion),
            domain: StateDomain::unbounded(d),
        }
    }

    pub fn with_domain(mut self, domain: StateDomain<T>) -> Self {
        self.domain = domain;
        self
    }
}

impl<T: Real> Diffusion<T> for FnDiffusion<T> {
    fn state_dim(&self) -> usize {
        self.d
    }
    fn param_dim(&self) -> usize {
        self.p
    }
    fn drift(&self, x: &[T], theta: &[T], out: &mut [T]) {
        (self.drift)(x, theta, out)
    }
    fn diffusion(&self, x: &[T], theta: &[T], out: &mut Mat<T>) {
        (self.diffusion)(x, theta, out)
    }
    fn domain(&self) -> &StateDomain<T> {
        &self.domain
    }
}

impl<T> std::fmt::Debug for FnDiffusion<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnDiffusion")
            .field("d", &self.d)
            .field("p", &self.p)
            .finish_non_exhaustive()
    }
}

/// Observation times are the integers `1..=n`; each unit interval is cut
/// into `m` Euler steps of width `Δτ = 1/m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGrid {
    pub n: usize,
    pub m: usize,
}

impl TimeGrid {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidConfig("m must be at least 1".into()));
        }
        Ok(Self { n, m })
    }

    /// Grid from a step width; `1/delta_tau` must be an integer.
    pub fn from_delta_tau(n: usize, delta_tau: f64) -> Result<Self> {
        if !(delta_tau > 0.0 && delta_tau <= 1.0) {
            return Err(Error::InvalidConfig(format!("delta_tau {delta_tau} not in (0, 1]")));
        }
        let m = (1.0 / delta_tau).round();
        if ((m * delta_tau) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "1/delta_tau = {} is not an integer",
                1.0 / delta_tau
            )));
        }
        Self::new(n, m as usize)
    }

    pub fn delta_tau<T: Real>(&self) -> T {
        T::one() / T::of_usize(self.m)
    }

    /// `τ_{t,k} = t + k/m`.
    pub fn tau<T: Real>(&self, t: usize, k: usize) -> T {
        T::of_usize(t) + T::of_usize(k) / T::of_usize(self.m)
    }

    pub fn fine_len(&self) -> usize {
        self.n * self.m + 1
    }
}

/// Working-scale parameter bookkeeping: components flagged in `log_mask`
/// are stored as `ln θ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTransform {
    pub log_mask: Vec<bool>,
}

impl ParamTransform {
    pub fn all_log(p: usize) -> Self {
        Self {
            log_mask: vec![true; p],
        }
    }

    pub fn identity(p: usize) -> Self {
        Self {
            log_mask: vec![false; p],
        }
    }

    pub fn dim(&self) -> usize {
        self.log_mask.len()
    }

    pub fn to_natural<T: Real>(&self, work: &[T]) -> Vec<T> {
        work.iter()
            .zip(&self.log_mask)
            .map(|(&w, &log)| if log { w.exp() } else { w })
            .collect()
    }

    pub fn to_work<T: Real>(&self, natural: &[T]) -> Vec<T> {
        natural
            .iter()
            .zip(&self.log_mask)
            .map(|(&v, &log)| if log { v.ln() } else { v })
            .collect()
    }

    pub fn params<T: Real>(&self, work: &[T]) -> ParamVector<T> {
        ParamVector {
            natural: self.to_natural(work),
            work: work.to_vec(),
        }
    }
}

/// A parameter value in both representations.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T> {
    pub natural: Vec<T>,
    pub work: Vec<T>,
}

impl<T: Real> ParamVector<T> {
    pub fn from_natural(natural: &[T], transform: &ParamTransform) -> Self {
        Self {
            natural: natural.to_vec(),
            work: transform.to_work(natural),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.natural.iter().chain(&self.work).all(|v| v.is_finite())
    }
}

/// `Y_t = Fᵀ X_t + ε_t`, `ε_t ~ N(0, Σ)`.
#[derive(Debug, Clone)]
pub struct ObservationModel<T> {
    f: Mat<T>,
    sigma: Mat<T>,
    sigma_chol: Option<Cholesky<T>>,
    sigma_sqrt: Mat<T>,
}

impl<T: Real> ObservationModel<T> {
    /// `f` is `d × d_o`, `sigma` is `d_o × d_o` symmetric PSD.
    pub fn new(f: Mat<T>, sigma: Mat<T>) -> Result<Self> {
        let d_o = f.cols();
        if d_o == 0 || d_o > f.rows() {
            return Err(Error::Shape(format!("F is {}x{}; need d_o ≤ d", f.rows(), d_o)));
        }
        if sigma.rows() != d_o || sigma.cols() != d_o {
            return Err(Error::Shape(format!("Sigma must be {d_o}x{d_o}")));
        }
        if sigma.max_asymmetry() > T::of(1e-12) * (T::one() + sigma.frobenius()) {
            return Err(Error::InvalidConfig("Sigma is not symmetric".into()));
        }
        let scale = T::one().max(sigma.frobenius());
        if min_eigenvalue(&sigma) < -T::of(1e-9) * scale {
            return Err(Error::InvalidConfig("Sigma has a negative eigenvalue".into()));
        }
        let sigma_chol = Cholesky::new(&sigma);
        let sigma_sqrt = psd_sqrt(&sigma);
        Ok(Self {
            f,
            sigma,
            sigma_chol,
            sigma_sqrt,
        })
    }

    /// All `d` components observed with independent noise variances.
    pub fn full(d: usize, variances: &[T]) -> Result<Self> {
        Self::new(Mat::identity(d), Mat::from_diag(variances))
    }

    /// Components listed in `observed` seen with the given noise variances.
    pub fn partial(d: usize, observed: &[usize], variances: &[T]) -> Result<Self> {
        let mut f = Mat::zeros(d, observed.len());
        for (j, &i) in observed.iter().enumerate() {
            if i >= d {
                return Err(Error::Shape(format!("observed component {i} out of range")));
            }
            f[(i, j)] = T::one();
        }
        Self::new(f, Mat::from_diag(variances))
    }

    pub fn f(&self) -> &Mat<T> {
        &self.f
    }

    pub fn sigma(&self) -> &Mat<T> {
        &self.sigma
    }

    pub fn state_dim(&self) -> usize {
        self.f.rows()
    }

    pub fn obs_dim(&self) -> usize {
        self.f.cols()
    }

    /// True when `F = I` so the observation is the full state.
    pub fn observes_full_state(&self) -> bool {
        self.f.is_square() && self.f == Mat::identity(self.f.rows())
    }

    pub fn is_noise_free(&self) -> bool {
        self.sigma.as_slice().iter().all(|&v| v == T::zero())
    }

    /// `Fᵀ x`.
    pub fn project(&self, x: &[T]) -> Vec<T> {
        self.f.tr_mul_vec(x)
    }

    /// `ln N(y; Fᵀx, Σ)`.
    pub fn log_density(&self, y: &[T], x: &[T]) -> Result<T> {
        let mean = self.project(x);
        match &self.sigma_chol {
            Some(c) => Ok(c.log_density(y, &mean)),
            None => gaussian_log_density(y, &mean, &self.sigma),
        }
    }

    /// Draws `y = Fᵀx + Σ^{1/2} z`.
    pub fn sample(&self, x: &[T], rng: &mut dyn RngCore) -> Vec<T> {
        let mut z = vec![T::zero(); self.obs_dim()];
        fill_normal(rng, &mut z);
        let noise = self.sigma_sqrt.mul_vec(&z);
        self.project(x).into_iter().zip(noise).map(|(a, b)| a + b).collect()
    }
}

/// Distribution of `X_0`, written as a deterministic map of a standard
/// Gaussian `d`-block so correlated kernels cover it.
#[derive(Debug, Clone)]
pub enum InitialState<T> {
    PointMass(Vec<T>),
    Gaussian { mean: Vec<T>, cov: Mat<T>, chol: Mat<T> },
}

impl<T: Real> InitialState<T> {
    pub fn point(x0: &[T]) -> Self {
        Self::PointMass(x0.to_vec())
    }

    pub fn gaussian(mean: Vec<T>, cov: Mat<T>) -> Result<Self> {
        let chol = Cholesky::new(&cov).ok_or(Error::SingularCovariance)?.l().clone();
        Ok(Self::Gaussian { mean, cov, chol })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::PointMass(x) => x.len(),
            Self::Gaussian { mean, .. } => mean.len(),
        }
    }

    /// Maps a standard Gaussian block `u` (length `d`) to a draw of `X_0`.
    pub fn draw(&self, u: &[T]) -> Vec<T> {
        match self {
            Self::PointMass(x) => x.clone(),
            Self::Gaussian { mean, chol, .. } => chol.mul_vec(u).into_iter().zip(mean).map(|(a, &b)| a + b).collect(),
        }
    }

    pub fn mean(&self) -> &[T] {
        match self {
            Self::PointMass(x) => x,
            Self::Gaussian { mean, .. } => mean,
        }
    }

    pub fn covariance(&self) -> Mat<T> {
        match self {
            Self::PointMass(x) => Mat::zeros(x.len(), x.len()),
            Self::Gaussian { cov, .. } => cov.clone(),
        }
    }
}

/// Values of `X` on the whole fine grid, `n·m + 1` points of dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath<T> {
    grid: TimeGrid,
    d: usize,
    values: Vec<T>,
}

impl<T: Real> LatentPath<T> {
    pub fn from_values(grid: TimeGrid, d: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.fine_len() * d {
            return Err(Error::Shape(format!(
                "path has {} values, expected {}",
                values.len(),
                grid.fine_len() * d
            )));
        }
        Ok(Self { grid, d, values })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.grid.fine_len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `x^o`: the states at observation times `1..=n`.
    pub fn observed_states(&self) -> Vec<Vec<T>> {
        (1..=self.grid.n)
            .map(|t| self.point(t * self.grid.m).to_vec())
            .collect()
    }

    /// `x^L`: every grid point that is not an observation time (includes `x_0`).
    pub fn latent_states(&self) -> Vec<Vec<T>> {
        (0..self.len())
            .filter(|i| *i == 0 || i % self.grid.m != 0)
            .map(|i| self.point(i).to_vec())
            .collect()
    }

    /// Segment `x_{[t, t+1]}` (m + 1 points) flattened.
    pub fn segment(&self, t: usize) -> &[T] {
        let m = self.grid.m;
        &self.values[t * m * self.d..((t + 1) * m + 1) * self.d]
    }
}

#[inline]
pub(crate) fn moments_into<T: Real, M: Diffusion<T> + ?Sized>(
    model: &M,
    x: &[T],
    theta: &[T],
    alpha: &mut [T],
    beta: &mut Mat<T>,
) -> Result<()> {
    model.drift(x, theta, alpha);
    model.diffusion(x, theta, beta);
    if alpha.iter().all(|v| v.is_finite()) && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteDrift)
    }
}

/// Euler–Maruyama one-step moments: `(x + α dt, β dt)`.
pub fn euler_moments<T: Real, M: Diffusion<T> + ?Sized>(
    model: &M,
    x: &[T],
    theta: &ParamVector<T>,
    dt: T,
) -> Result<(Vec<T>, Mat<T>)> {
    let d = model.state_dim();
    let mut alpha = vec![T::zero(); d];
    let mut beta = Mat::zeros(d, d);
    moments_into(model, x, &theta.natural, &mut alpha, &mut beta)?;
    let scale = T::one().max(beta.frobenius());
    if beta.max_asymmetry() > T::of(1e-9) * scale {
        return Err(Error::NotPsd {
            min_eigenvalue: f64::NAN,
        });
    }
    let lam = min_eigenvalue(&beta);
    if lam < -T::of(1e-9) * scale {
        return Err(Error::NotPsd {
            min_eigenvalue: lam.as_f64(),
        });
    }
    let mean = x.iter().zip(&alpha).map(|(&xi, &a)| xi + a * dt).collect();
    Ok((mean, beta.scaled(dt)))
}

/// `ln p_e(x_to | x_from, θ)` for a step of width `dt`.
pub fn euler_log_density<T: Real, M: Diffusion<T> + ?Sized>(
    model: &M,
    x_from: &[T],
    x_to: &[T],
    theta: &ParamVector<T>,
    dt: T,
) -> Result<T> {
    let d = model.state_dim();
    let mut alpha = vec![T::zero(); d];
    let mut beta = Mat::zeros(d, d);
    moments_into(model, x_from, &theta.natural, &mut alpha, &mut beta)?;
    let mean: Vec<T> = x_from.iter().zip(&alpha).map(|(&xi, &a)| xi + a * dt).collect();
    gaussian_log_density(x_to, &mean, &beta.scaled(dt))
}

/// `ln p_e(x_{(t,t+1]} | x_t, θ)`: `segment` holds `m + 1` points starting at `x_t`.
pub fn path_log_density<T: Real, M: Diffusion<T> + ?Sized>(
    model: &M,
    segment: &[T],
    theta: &ParamVector<T>,
    grid: &TimeGrid,
) -> Result<T> {
    let d = model.state_dim();
    if segment.len() != (grid.m + 1) * d {
        return Err(Error::Shape(format!(
            "segment has {} values, expected {}",
            segment.len(),
            (grid.m + 1) * d
        )));
    }
    let dt = grid.delta_tau::<T>();
    let mut total = T::zero();
    for k in 0..grid.m {
        let from = &segment[k * d..(k + 1) * d];
        let to = &segment[(k + 1) * d..(k + 2) * d];
        total = total + euler_log_density(model, from, to, theta, dt)?;
    }
    Ok(total)
}

/// Forward Euler–Maruyama simulation over `grid`, clamping to the state
/// domain after every step.
pub fn simulate_path<T: Real, M: Diffusion<T> + ?Sized>(
    model: &M,
    theta: &ParamVector<T>,
    x0: &[T],
    grid: &TimeGrid,
    rng: &mut dyn RngCore,
) -> Result<LatentPath<T>> {
    let d = model.state_dim();
    if x0.len() != d {
        return Err(Error::Shape("x0 has the wrong dimension".into()));
    }
    if !model.domain().contains(x0) {
        return Err(Error::DomainExit);
    }
    let dt = grid.delta_tau::<T>();
    let sqrt_dt = dt.sqrt();
    let steps = grid.n * grid.m;
    let mut values = Vec::with_capacity((steps + 1) * d);
    values.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut alpha = vec![T::zero(); d];
    let mut beta = Mat::zeros(d, d);
    let mut z = vec![T::zero(); d];
    for _ in 0..steps {
        moments_into(model, &x, &theta.natural, &mut alpha, &mut beta)?;
        fill_normal(rng, &mut z);
        let root = psd_sqrt(&beta);
        let noise = root.mul_vec(&z);
        for i in 0..d {
            x[i] = x[i] + alpha[i] * dt + noise[i] * sqrt_dt;
        }
        model.domain().clamp(&mut x);
        values.extend_from_slice(&x);
    }
    LatentPath::from_values(*grid, d, values)
}

/// Noisy observations `y_t = Fᵀ x_t + ε_t`, `t = 1..=n`.
pub fn simulate_data<T: Real>(
    path: &LatentPath<T>,
    obs: &ObservationModel<T>,
    rng: &mut dyn RngCore,
) -> Result<Vec<Vec<T>>> {
    if obs.state_dim() != path.dim() {
        return Err(Error::Shape("observation model and path dimensions differ".into()));
    }
    Ok(path.observed_states().iter().map(|x| obs.sample(x, rng)).collect())
}

/// `ln p(y_t | x_t)`.
pub fn obs_log_density<T: Real>(y: &[T], x: &[T], obs: &ObservationModel<T>) -> Result<T> {
    obs.log_density(y, x)
}

/// A discretised inference problem: model, observation scheme, data
/// `y_{1:n}` (one row per integer time), prior on `x_0` and the time grid.
#[derive(Clone, Copy)]
pub struct Problem<'a, T: Real> {
    pub model: &'a dyn Diffusion<T>,
    pub obs: &'a ObservationModel<T>,
    pub data: &'a [Vec<T>],
    pub init: &'a InitialState<T>,
    pub grid: TimeGrid,
}

impl<'a, T: Real> Problem<'a, T> {
    pub fn new(
        model: &'a dyn Diffusion<T>,
        obs: &'a ObservationModel<T>,
        data: &'a [Vec<T>],
        init: &'a InitialState<T>,
        m: usize,
    ) -> Result<Self> {
        let d = model.state_dim();
        if obs.state_dim() != d || init.dim() != d {
            return Err(Error::Shape("model, observation and x0 dimensions differ".into()));
        }
        if data.iter().any(|y| y.len() != obs.obs_dim()) {
            return Err(Error::Shape("data rows do not match the observation dimension".into()));
        }
        let grid = TimeGrid::new(data.len(), m)?;
        Ok(Self {
            model,
            obs,
            data,
            init,
            grid,
        })
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    pub fn d(&self) -> usize {
        self.model.state_dim()
    }
}
