#![allow(dead_code)]

use sde_pmcmc::linalg::Mat;
use sde_pmcmc::rng::std_normal_cdf;
use sde_pmcmc::sde::{FnDiffusion, ParamTransform, ParamVector};

/// `dX = μ dt + σ dW` with `θ = (μ)` on the natural scale.
pub fn brownian_drift(sigma: f64) -> FnDiffusion<f64> {
    FnDiffusion::new(
        1,
        1,
        |_: &[f64], th: &[f64], a: &mut [f64]| a[0] = th[0],
        move |_: &[f64], _: &[f64], b: &mut Mat<f64>| b[(0, 0)] = sigma * sigma,
    )
}

/// `dX = −κ X dt + σ dW` with `θ = (κ)`.
pub fn ou(sigma: f64) -> FnDiffusion<f64> {
    FnDiffusion::new(
        1,
        1,
        |x: &[f64], th: &[f64], a: &mut [f64]| a[0] = -th[0] * x[0],
        move |_: &[f64], _: &[f64], b: &mut Mat<f64>| b[(0, 0)] = sigma * sigma,
    )
}

pub fn natural(theta: &[f64]) -> ParamVector<f64> {
    ParamVector::from_natural(theta, &ParamTransform::identity(theta.len()))
}

pub fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (x - mean).powi(2) / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn std_err(x: &[f64]) -> f64 {
    (var(x) / x.len() as f64).sqrt()
}

/// Exact log likelihood of `y_{1:n}` for `x_t = x_{t−1} + μ + N(0, q)`,
/// `y_t = x_t + N(0, r)`, from a known `x_0`.
pub fn kalman_random_walk(y: &[f64], x0: f64, mu: f64, q: f64, r: f64) -> f64 {
    let (mut m, mut p) = (x0, 0.0);
    let mut ll = 0.0;
    for &yt in y {
        let (mp, pp) = (m + mu, p + q);
        let s = pp + r;
        ll += ln_normal(yt, mp, s);
        let k = pp / s;
        m = mp + k * (yt - mp);
        p = (1.0 - k) * pp;
    }
    ll
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test against `cdf`; returns the p-value.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let en = n.sqrt();
    kolmogorov_q((en + 0.12 + 0.11 / en) * d)
}

pub fn ks_normal(sample: &[f64], mean: f64, sd: f64) -> f64 {
    ks_one_sample(sample, |v| std_normal_cdf((v - mean) / sd))
}

/// Two-sample Kolmogorov–Smirnov p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    kolmogorov_q((en + 0.12 + 0.11 / en) * d)
}

pub fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let m = mean(x);
    let num: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    let den: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    num / den
}

pub fn assert_close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
}
