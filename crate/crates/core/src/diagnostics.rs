//! Effective sample size, chain summaries and the particle-count and
//! random-walk tuning rules.

use crate::error::{Error, Result};
use crate::importance::{estimate_joint, Innovations};
use crate::linalg::Mat;
use crate::parallel::Workers;
use crate::rng::{normal_vec, Streams};
use crate::samplers::{CnKernel, LikelihoodEstimator};
use crate::scalar::Real;
use crate::sde::{ParamVector, Problem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssEstimate {
    pub ess: f64,
    /// Set for a constant chain, whose ESS is reported as its length.
    pub degenerate: bool,
    pub ar_order: usize,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Biased autocovariances `γ_0..=γ_max` of a centred series.
fn autocovariance(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    (0..=max_lag)
        .map(|k| x[..n - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

/// Spectral density at frequency zero from an autoregressive fit by
/// Yule–Walker, with the order chosen by AIC up to `min(L−1, ⌊10 log10 L⌋)`.
/// Returns `(spectral density, order)`.
pub fn spectrum0_ar(chain: &[f64]) -> (f64, usize) {
    let n = chain.len();
    let mu = mean(chain);
    let x: Vec<f64> = chain.iter().map(|v| v - mu).collect();
    let order_max = ((10.0 * (n as f64).log10()).floor() as usize).min(n - 1);
    let r = autocovariance(&x, order_max);
    if r[0] <= 0.0 {
        return (0.0, 0);
    }
    // Levinson–Durbin recursion, keeping every order's coefficients.
    let mut coefs: Vec<Vec<f64>> = vec![Vec::new()];
    let mut vars = vec![r[0]];
    let mut phi: Vec<f64> = Vec::new();
    let mut v = r[0];
    for k in 1..=order_max {
        let acc: f64 = (1..k).map(|j| phi[j - 1] * r[k - j]).sum();
        let kappa = (r[k] - acc) / v;
        let mut next = vec![0.0; k];
        for j in 1..k {
            next[j - 1] = phi[j - 1] - kappa * phi[k - j - 1];
        }
        next[k - 1] = kappa;
        v *= 1.0 - kappa * kappa;
        if !(v > 0.0) {
            break;
        }
        phi = next;
        coefs.push(phi.clone());
        vars.push(v);
    }
    let nf = n as f64;
    let order = (0..vars.len())
        .min_by(|&a, &b| {
            let aic = |k: usize| nf * vars[k].ln() + 2.0 * k as f64;
            aic(a).partial_cmp(&aic(b)).unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    let var_pred = vars[order] * nf / (nf - (order as f64 + 1.0));
    let denom = 1.0 - coefs[order].iter().sum::<f64>();
    (var_pred / (denom * denom), order)
}

/// ESS `= L · var(x) / S(0)` with `S(0)` from [`spectrum0_ar`], clamped to
/// `[1, L]`. Needs at least 10 draws.
pub fn effective_sample_size_detail<T: Real>(chain: &[T]) -> Result<EssEstimate> {
    let n = chain.len();
    if n < 10 {
        return Err(Error::InvalidConfig(format!("ESS needs at least 10 draws, got {n}")));
    }
    let x: Vec<f64> = chain.iter().map(|v| v.as_f64()).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("chain contains non-finite values".into()));
    }
    let mu = mean(&x);
    let var = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n as f64 - 1.0);
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if var <= (scale * 1e-13).powi(2) {
        return Ok(EssEstimate {
            ess: n as f64,
            degenerate: true,
            ar_order: 0,
        });
    }
    let (spec, order) = spectrum0_ar(&x);
    let ess = if spec > 0.0 { n as f64 * var / spec } else { n as f64 };
    Ok(EssEstimate {
        ess: ess.clamp(1.0, n as f64),
        degenerate: false,
        ar_order: order,
    })
}

pub fn effective_sample_size<T: Real>(chain: &[T]) -> Result<f64> {
    effective_sample_size_detail(chain).map(|e| e.ess)
}

/// Batch-means ESS with `⌊√L⌋` batches, a cross-check for the AR estimate.
pub fn batch_means_ess<T: Real>(chain: &[T]) -> Result<f64> {
    let n = chain.len();
    if n < 10 {
        return Err(Error::InvalidConfig(format!("ESS needs at least 10 draws, got {n}")));
    }
    let x: Vec<f64> = chain.iter().map(|v| v.as_f64()).collect();
    let batches = (n as f64).sqrt().floor() as usize;
    let size = n / batches;
    let used = &x[..batches * size];
    let mu = mean(used);
    let var = used.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (used.len() as f64 - 1.0);
    let bm: f64 = used.chunks(size).map(|c| (mean(c) - mu).powi(2)).sum::<f64>() * size as f64 / (batches as f64 - 1.0);
    if bm <= 0.0 {
        return Ok(n as f64);
    }
    Ok((n as f64 * var / bm).clamp(1.0, n as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainEss {
    pub name: String,
    pub estimate: EssEstimate,
}

/// ESS of every monitored chain, the minimum and the minimum per second.
#[derive(Debug, Clone, PartialEq)]
pub struct EssReport {
    pub chains: Vec<ChainEss>,
    pub min_ess: f64,
    pub seconds: f64,
    pub mess_per_second: f64,
    pub acceptance: Vec<(String, f64)>,
}

impl EssReport {
    pub fn degenerate(&self) -> Vec<&str> {
        self.chains
            .iter()
            .filter(|c| c.estimate.degenerate)
            .map(|c| c.name.as_str())
            .collect()
    }
}

/// Builds an [`EssReport`]; `chains` pairs names with series.
pub fn ess_report<T: Real>(
    chains: &[(String, Vec<T>)],
    seconds: f64,
    acceptance: Vec<(String, f64)>,
) -> Result<EssReport> {
    let chains = chains
        .iter()
        .map(|(name, x)| {
            Ok(ChainEss {
                name: name.clone(),
                estimate: effective_sample_size_detail(x)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let min_ess = chains.iter().map(|c| c.estimate.ess).fold(f64::INFINITY, f64::min);
    let mess_per_second = if seconds > 0.0 {
        min_ess / seconds
    } else {
        f64::INFINITY
    };
    Ok(EssReport {
        chains,
        min_ess,
        seconds,
        mess_per_second,
        acceptance,
    })
}

/// `Ω = (2.56² / p) · var̂`.
pub fn rwm_variance<T: Real>(posterior_cov: &Mat<T>, p: usize) -> Mat<T> {
    posterior_cov.scaled(T::of(2.56 * 2.56) / T::of_usize(p))
}

pub const TUNING_REPLICATES: usize = 50;
pub const PMMH_SD_TARGET: f64 = 1.5;
pub const CPMMH_VAR_TARGET: f64 = 1.0;

/// Smallest `N ≤ max_n` with `metric(N) ≤ threshold`, by doubling from 1 and
/// then bisecting the last bracket. Assumes the metric falls with `N`.
pub fn select_particle_count(
    max_n: usize,
    threshold: f64,
    mut metric: impl FnMut(usize) -> Result<f64>,
) -> Result<usize> {
    if max_n == 0 {
        return Err(Error::InvalidConfig("max_n must be positive".into()));
    }
    let passes = |v: f64| v.is_finite() && v <= threshold;
    let mut lo = 0;
    let mut hi = 1;
    loop {
        let v = metric(hi)?;
        if passes(v) {
            break;
        }
        if hi >= max_n {
            return Err(Error::TuningFailure { max_n, last_value: v });
        }
        lo = hi;
        hi = (hi * 2).min(max_n);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if passes(metric(mid)?) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn sample_sd(x: &[f64]) -> f64 {
    let mu = mean(x);
    (x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

/// Sample standard deviation of `ln p̂` over `reps` independent variate draws.
pub fn log_lik_sd<T: Real, E: LikelihoodEstimator<T> + ?Sized>(
    estimator: &E,
    theta: &ParamVector<T>,
    particles: usize,
    reps: usize,
    streams: &Streams,
    workers: &Workers,
) -> Result<f64> {
    let n_u = estimator.aux_len(particles);
    let vals = (0..reps)
        .map(|r| {
            let u: Vec<T> = normal_vec(&mut streams.stream(particles as u64, r as u64, 0), n_u);
            estimator
                .log_likelihood(theta, &u, particles, workers)
                .map(|v| v.as_f64())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sample_sd(&vals))
}

/// Sample variance of `ln p̂(u') − ln p̂(u)` with `u' ~ K_ρ(· | u)`.
pub fn log_lik_diff_var<T: Real, E: LikelihoodEstimator<T> + ?Sized>(
    estimator: &E,
    theta: &ParamVector<T>,
    kernel: &CnKernel<T>,
    particles: usize,
    reps: usize,
    streams: &Streams,
    workers: &Workers,
) -> Result<f64> {
    let n_u = estimator.aux_len(particles);
    let vals = (0..reps)
        .map(|r| {
            let mut rng = streams.stream(particles as u64, r as u64, 1);
            let u: Vec<T> = normal_vec(&mut rng, n_u);
            let u2 = kernel.propose(&u, &mut rng);
            let a = estimator.log_likelihood(theta, &u, particles, workers)?;
            let b = estimator.log_likelihood(theta, &u2, particles, workers)?;
            Ok((b - a).as_f64())
        })
        .collect::<Result<Vec<_>>>()?;
    let sd = sample_sd(&vals);
    Ok(sd * sd)
}

/// Particle count for PMMH: the log-likelihood estimate has standard
/// deviation at most 1.5 at `theta`.
pub fn tune_n_pmmh<T: Real, E: LikelihoodEstimator<T> + ?Sized>(
    estimator: &E,
    theta: &ParamVector<T>,
    max_n: usize,
    streams: &Streams,
    workers: &Workers,
) -> Result<usize> {
    select_particle_count(max_n, PMMH_SD_TARGET, |n| {
        log_lik_sd(estimator, theta, n, TUNING_REPLICATES, streams, workers)
    })
}

/// Particle count for correlated schemes: `Var(ln p̂(u') − ln p̂(u)) ≤ 1`
/// under the Crank–Nicolson kernel at fixed `theta`.
pub fn tune_n_cpmmh<T: Real, E: LikelihoodEstimator<T> + ?Sized>(
    estimator: &E,
    theta: &ParamVector<T>,
    rho: T,
    max_n: usize,
    streams: &Streams,
    workers: &Workers,
) -> Result<usize> {
    let kernel = CnKernel::new(rho)?;
    select_particle_count(max_n, CPMMH_VAR_TARGET, |n| {
        log_lik_diff_var(estimator, theta, &kernel, n, TUNING_REPLICATES, streams, workers)
    })
}

/// The importance-sampling estimate of `p(x^o | θ)` at fixed `x^o`, seen as a
/// function of the innovations, for tuning the augmented scheme.
pub struct AugmentedEstimator<'a, T: Real> {
    pub problem: Problem<'a, T>,
    pub x_o: &'a [Vec<T>],
}

impl<T: Real> LikelihoodEstimator<T> for AugmentedEstimator<'_, T> {
    fn aux_len(&self, particles: usize) -> usize {
        Innovations::<T>::len_for(self.problem.n(), particles, self.problem.grid.m, self.problem.d())
    }

    fn log_likelihood(&self, theta: &ParamVector<T>, u: &[T], particles: usize, workers: &Workers) -> Result<T> {
        let p = &self.problem;
        let inn = Innovations::from_vec(p.n(), particles, p.grid.m, p.d(), u.to_vec())?;
        let est = estimate_joint(p, self.x_o, theta, &inn, workers)?;
        Ok(est.into_iter().sum())
    }
}

/// [`tune_n_cpmmh`] applied to the augmented scheme's joint estimator.
#[allow(clippy::too_many_arguments)]
pub fn tune_n_acpmmh<T: Real>(
    problem: &Problem<'_, T>,
    x_o: &[Vec<T>],
    theta: &ParamVector<T>,
    rho: T,
    max_n: usize,
    streams: &Streams,
    workers: &Workers,
) -> Result<usize> {
    let est = AugmentedEstimator { problem: *problem, x_o };
    tune_n_cpmmh(&est, theta, rho, max_n, streams, workers)
}
