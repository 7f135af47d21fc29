//! Modified diffusion bridge proposals.
//!
//! Two variants share one generative form,
//! `x_{k+1} = x_k + μ_k Δτ + √(Ψ_k Δτ) u_k`:
//!
//! * [`BridgeKind::NoisyEndpoint`] steers toward a noisy, possibly partial
//!   observation `y_{t+1}` and generates all `m` points of `x_{(t,t+1]}`;
//! * [`BridgeKind::ExactEndpoint`] steers toward a known `x_{t+1}` and
//!   generates the `m − 1` intermediate points only.
//!
//! Everything here is a pure function of its arguments.

use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, Cholesky, Mat};
use crate::scalar::Real;
use crate::sde::{moments_into, Diffusion, ObservationModel, ParamVector, TimeGrid};

#[derive(Debug, Clone, Copy)]
pub enum BridgeKind<'a, T> {
    NoisyEndpoint {
        obs: &'a ObservationModel<T>,
        y_next: &'a [T],
    },
    ExactEndpoint {
        x_next: &'a [T],
    },
}

impl<T> BridgeKind<'_, T> {
    /// Number of innovation rows consumed per interval of `m` steps.
    pub fn innovation_rows(&self, m: usize) -> usize {
        match self {
            BridgeKind::NoisyEndpoint { .. } => m,
            BridgeKind::ExactEndpoint { .. } => m.saturating_sub(1),
        }
    }
}

/// Shape-checked view of the standard Gaussian variates driving one interval.
#[derive(Debug, Clone, Copy)]
pub struct InnovationBlock<'a, T> {
    data: &'a [T],
    rows: usize,
    d: usize,
}

impl<'a, T: Real> InnovationBlock<'a, T> {
    pub fn new(data: &'a [T], rows: usize, d: usize) -> Result<Self> {
        if data.len() != rows * d {
            return Err(Error::Shape(format!(
                "innovation block has {} values, expected {rows}x{d}",
                data.len()
            )));
        }
        Ok(Self { data, rows, d })
    }

    /// Block sized for `kind` over an interval of `m` steps.
    pub fn for_kind(data: &'a [T], kind: &BridgeKind<'_, T>, m: usize, d: usize) -> Result<Self> {
        Self::new(data, kind.innovation_rows(m), d)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn row(&self, k: usize) -> &'a [T] {
        &self.data[k * self.d..(k + 1) * self.d]
    }
}

/// Output of [`propagate`]: the generated points (row-major, `rows × d`) and
/// `ln g` of those points under the construct.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeDraw<T> {
    pub segment: Vec<T>,
    pub log_g: T,
}

/// A bridge draw together with the Euler density of the completed path,
/// `ln p_e(x_{(t,t+1]} | x_t)`; for the exact variant this includes the final
/// step onto the fixed endpoint.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct WeightedDraw<T> {
    pub segment: Vec<T>,
    pub log_g: T,
    pub log_pe: T,
}

/// `(μ, Ψ)` of the noisy-endpoint construct at `τ_k`, with `Δ_k = t_next − τ_k`:
///
/// `μ = α + βF(FᵀβFΔ_k + Σ)⁻¹{y − Fᵀ(x + αΔ_k)}`,
/// `Ψ = β − βF(FᵀβFΔ_k + Σ)⁻¹Fᵀβ Δτ`.
#[allow(clippy::too_many_arguments)]
pub fn mdb_noisy_params<T: Real, M: Diffusion<T> + ?Sized>(
    model: &M,
    obs: &ObservationModel<T>,
    x_k: &[T],
    y_next: &[T],
    theta: &ParamVector<T>,
    tau_k: T,
    t_next: T,
    delta_tau: T,
) -> Result<(Vec<T>, Mat<T>)> {
    let d = model.state_dim();
    let mut alpha = vec![T::zero(); d];
    let mut beta = Mat::zeros(d, d);
    moments_into(model, x_k, &theta.natural, &mut alpha, &mut beta)?;
    noisy_params_from(obs, x_k, y_next, &alpha, &beta, t_next - tau_k, delta_tau)
}

fn noisy_params_from<T: Real>(
    obs: &ObservationModel<T>,
    x_k: &[T],
    y_next: &[T],
    alpha: &[T],
    beta: &Mat<T>,
    remaining: T,
    delta_tau: T,
) -> Result<(Vec<T>, Mat<T>)> {
    let f = obs.f();
    let beta_f = beta.matmul(f);
    let a = f.transpose().matmul(&beta_f).scaled(remaining).add(obs.sigma());
    let chol = Cholesky::with_jitter(&a).ok_or(Error::SingularInnovation)?;
    let ahead: Vec<T> = x_k.iter().zip(alpha).map(|(&x, &al)| x + al * remaining).collect();
    let resid: Vec<T> = y_next.iter().zip(obs.project(&ahead)).map(|(&y, p)| y - p).collect();
    let gain = beta_f.mul_vec(&chol.solve(&resid));
    let mu = alpha.iter().zip(gain).map(|(&al, g)| al + g).collect();
    // βF A⁻¹ Fᵀβ
    let reduce = beta_f.matmul(&chol.solve_mat(&beta_f.transpose()));
    let mut psi = beta.sub(&reduce.scaled(delta_tau));
    psi.symmetrize();
    Ok((mu, psi))
}

/// `(μ, Ψ)` of the exact-endpoint construct:
/// `μ = (x_next − x_k)/(t_next − τ_k)`, `Ψ = ((t_next − τ_{k+1})/(t_next − τ_k)) β(x_k)`.
pub fn mdb_exact_params<T: Real, M: Diffusion<T> + ?Sized>(
    model: &M,
    x_k: &[T],
    x_next: &[T],
    theta: &ParamVector<T>,
    tau_k: T,
    t_next: T,
    delta_tau: T,
) -> Result<(Vec<T>, Mat<T>)> {
    let d = model.state_dim();
    let mut alpha = vec![T::zero(); d];
    let mut beta = Mat::zeros(d, d);
    moments_into(model, x_k, &theta.natural, &mut alpha, &mut beta)?;
    let remaining = t_next - tau_k;
    let factor = (t_next - (tau_k + delta_tau)) / remaining;
    let mu = x_next.iter().zip(x_k).map(|(&b, &a)| (b - a) / remaining).collect();
    Ok((mu, beta.scaled(factor)))
}

/// `ln N(x; mean, s·B)` from a Cholesky factor of `B`.
#[inline]
fn scaled_log_density<T: Real>(chol: &Cholesky<T>, x: &[T], mean: &[T], s: T) -> T {
    let d = T::of_usize(chol.dim());
    -T::of(0.5) * (chol.mahalanobis_sq(x, mean) / s + chol.log_det() + d * s.ln()) - d * T::half_ln_2pi()
}

/// Generates the bridge segment driven by `u` and returns it with `ln g`.
pub fn propagate<T: Real, M: Diffusion<T> + ?Sized>(
    kind: &BridgeKind<'_, T>,
    model: &M,
    x_start: &[T],
    theta: &ParamVector<T>,
    grid: &TimeGrid,
    u: &InnovationBlock<'_, T>,
) -> Result<BridgeDraw<T>> {
    let w = propagate_weighted(kind, model, x_start, theta, grid.m, u)?;
    Ok(BridgeDraw {
        segment: w.segment,
        log_g: w.log_g,
    })
}

pub(crate) fn propagate_weighted<T: Real, M: Diffusion<T> + ?Sized>(
    kind: &BridgeKind<'_, T>,
    model: &M,
    x_start: &[T],
    theta: &ParamVector<T>,
    m: usize,
    u: &InnovationBlock<'_, T>,
) -> Result<WeightedDraw<T>> {
    let d = model.state_dim();
    let rows = kind.innovation_rows(m);
    if u.rows() != rows || u.d != d {
        return Err(Error::Shape(format!(
            "innovation block is {}x{}, bridge needs {rows}x{d}",
            u.rows(),
            u.d
        )));
    }
    let dt = T::one() / T::of_usize(m);
    let domain = model.domain();
    let th = &theta.natural;

    let mut segment = Vec::with_capacity(rows * d);
    let mut log_g = T::zero();
    let mut log_pe = T::zero();
    let mut alpha = vec![T::zero(); d];
    let mut beta = Mat::zeros(d, d);
    let mut x = x_start.to_vec();
    let mut next = vec![T::zero(); d];
    let mut euler_mean = vec![T::zero(); d];

    for k in 0..rows {
        moments_into(model, &x, th, &mut alpha, &mut beta)?;
        let remaining = T::of_usize(m - k) * dt;
        for i in 0..d {
            euler_mean[i] = x[i] + alpha[i] * dt;
        }
        match kind {
            BridgeKind::ExactEndpoint { x_next } => {
                // Ψ Δτ = c Δτ β with c = (m − k − 1)/(m − k).
                let s = T::of_usize(m - k - 1) / T::of_usize(m - k) * dt;
                let chol = Cholesky::with_jitter(&beta).ok_or(Error::SingularCovariance)?;
                let root = psd_sqrt(&beta).mul_vec(u.row(k));
                let sqrt_s = s.sqrt();
                let mut bridge_mean = vec![T::zero(); d];
                for i in 0..d {
                    bridge_mean[i] = x[i] + (x_next[i] - x[i]) / remaining * dt;
                    next[i] = bridge_mean[i] + sqrt_s * root[i];
                }
                if !domain.contains(&next) {
                    return Err(Error::DomainExit);
                }
                log_g = log_g + scaled_log_density(&chol, &next, &bridge_mean, s);
                log_pe = log_pe + scaled_log_density(&chol, &next, &euler_mean, dt);
            }
            BridgeKind::NoisyEndpoint { obs, y_next } => {
                let (mu, psi) = noisy_params_from(obs, &x, y_next, &alpha, &beta, remaining, dt)?;
                let cov = psi.scaled(dt);
                let g_chol = Cholesky::with_jitter(&cov).ok_or(Error::SingularInnovation)?;
                let root = psd_sqrt(&cov).mul_vec(u.row(k));
                let mut bridge_mean = vec![T::zero(); d];
                for i in 0..d {
                    bridge_mean[i] = x[i] + mu[i] * dt;
                    next[i] = bridge_mean[i] + root[i];
                }
                if !domain.contains(&next) {
                    return Err(Error::DomainExit);
                }
                let e_chol = Cholesky::with_jitter(&beta).ok_or(Error::SingularCovariance)?;
                log_g = log_g + g_chol.log_density(&next, &bridge_mean);
                log_pe = log_pe + scaled_log_density(&e_chol, &next, &euler_mean, dt);
            }
        }
        segment.extend_from_slice(&next);
        std::mem::swap(&mut x, &mut next);
    }

    if let BridgeKind::ExactEndpoint { x_next } = kind {
        moments_into(model, &x, th, &mut alpha, &mut beta)?;
        for i in 0..d {
            euler_mean[i] = x[i] + alpha[i] * dt;
        }
        let chol = Cholesky::with_jitter(&beta).ok_or(Error::SingularCovariance)?;
        log_pe = log_pe + scaled_log_density(&chol, x_next, &euler_mean, dt);
    }

    Ok(WeightedDraw { segment, log_g, log_pe })
}

/// Draws `x_{(t,t+1]}` by chaining noisy-endpoint bridges across every
/// interval, used to build a plausible `x^o` from data. `u` holds `n·m·d`
/// innovations.
pub fn bridge_path_from_data<T: Real, M: Diffusion<T> + ?Sized>(
    model: &M,
    obs: &ObservationModel<T>,
    data: &[Vec<T>],
    x0: &[T],
    theta: &ParamVector<T>,
    grid: &TimeGrid,
    u: &[T],
) -> Result<Vec<Vec<T>>> {
    let d = model.state_dim();
    let per = grid.m * d;
    if u.len() != data.len() * per {
        return Err(Error::Shape("innovations do not match data length".into()));
    }
    let mut x = x0.to_vec();
    let mut states = Vec::with_capacity(data.len());
    for (t, y) in data.iter().enumerate() {
        let kind = BridgeKind::NoisyEndpoint { obs, y_next: y };
        let block = InnovationBlock::new(&u[t * per..(t + 1) * per], grid.m, d)?;
        let draw = propagate(&kind, model, &x, theta, grid, &block)?;
        x = draw.segment[(grid.m - 1) * d..].to_vec();
        states.push(x.clone());
    }
    Ok(states)
}
