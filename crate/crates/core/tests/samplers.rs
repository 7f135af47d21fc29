mod common;

use common::*;
use rand::Rng;
use sde_pmcmc::importance::Innovations;
use sde_pmcmc::linalg::Mat;
use sde_pmcmc::models::{lotka_volterra_model, square_root_model, ModelSpec};
use sde_pmcmc::prior::Prior;
use sde_pmcmc::rng::{normal_vec, uniform, StreamRng, Streams};
use sde_pmcmc::samplers::*;
use sde_pmcmc::sde::*;
use sde_pmcmc::{Result, Workers};

fn serial() -> Workers {
    Workers::serial()
}

// ---------------------------------------------------------------- CN kernel

#[test]
fn cn_limits() {
    let u: Vec<f64> = normal_vec(&mut Streams::new(1).stream(0, 0, 0), 50);
    let same = CnKernel::new(1.0)
        .unwrap()
        .propose(&u, &mut Streams::new(1).stream(1, 0, 0));
    assert_eq!(same, u);
    let k0 = CnKernel::new(0.0).unwrap();
    let a = k0.propose(&u, &mut Streams::new(1).stream(2, 0, 0));
    let b = k0.propose(&vec![0.0; 50], &mut Streams::new(1).stream(2, 0, 0));
    assert_eq!(a, b);
    assert!(CnKernel::new(1.5).is_err());
    assert!(CnKernel::new(-0.1).is_err());
    assert!(CnKernel::new(f64::NAN).is_err());
}

#[test]
fn cn_chain_is_stationary_with_lag_one_correlation_rho() {
    let rho = 0.99;
    let kernel = CnKernel::new(rho).unwrap();
    let mut rng = Streams::new(3).stream(0, 0, 0);
    let dim = 1000;
    let iters = 100_000;
    let mut u: Vec<f64> = normal_vec(&mut rng, dim);
    let mut traces: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(iters)).collect();
    for _ in 0..iters {
        u = cn_propose(&kernel, &u, &mut rng);
        for (j, tr) in traces.iter_mut().enumerate() {
            tr.push(u[j]);
        }
    }
    let p = ks_normal(&u, 0.0, 1.0);
    assert!(p > 0.01, "KS p = {p}");
    for tr in &traces {
        let r = lag1_autocorrelation(tr);
        assert!((r - rho).abs() <= 0.01, "lag-1 = {r}");
        assert!(ks_normal(&tr.iter().step_by(1000).copied().collect::<Vec<_>>(), 0.0, 1.0) > 0.001);
    }
}

// ------------------------------------------------------------ test fixtures

/// Exact Kalman likelihood of the Brownian-drift model, ignoring `u`.
struct KalmanStub {
    y: Vec<f64>,
    q: f64,
    r: f64,
}

impl LikelihoodEstimator<f64> for KalmanStub {
    fn aux_len(&self, _: usize) -> usize {
        0
    }

    fn log_likelihood(&self, theta: &ParamVector<f64>, _: &[f64], _: usize, _: &Workers) -> Result<f64> {
        Ok(kalman_random_walk(&self.y, 0.0, theta.natural[0], self.q, self.r))
    }
}

struct FlatStub;

impl LikelihoodEstimator<f64> for FlatStub {
    fn aux_len(&self, _: usize) -> usize {
        3
    }

    fn log_likelihood(&self, _: &ParamVector<f64>, _: &[f64], _: usize, _: &Workers) -> Result<f64> {
        Ok(0.0)
    }
}

fn pm_settings(var: f64, iters: usize, theta0: f64) -> PmSettings<f64> {
    PmSettings {
        particles: 1,
        n_iters: iters,
        proposal: RwmProposal::diagonal(&[var]).unwrap(),
        theta0: vec![theta0],
        adaptation: None,
    }
}

/// Posterior mean and sd of the drift under a `N(0, prior_sd²)` prior,
/// read off the exactly quadratic Kalman log likelihood.
fn conjugate_drift_posterior(y: &[f64], x0: f64, q: f64, r: f64, prior_sd: f64) -> (f64, f64) {
    let l = |mu: f64| kalman_random_walk(y, x0, mu, q, r);
    let curvature = -(l(1.0) + l(-1.0) - 2.0 * l(0.0));
    let slope = (l(1.0) - l(-1.0)) / 2.0;
    let precision = curvature + 1.0 / (prior_sd * prior_sd);
    (slope / precision, precision.sqrt().recip())
}

fn bm_data(n: usize, mu: f64, r: f64, seed: u64) -> Vec<Vec<f64>> {
    let bm = brownian_drift(1.0);
    let grid = TimeGrid::new(n, 1).unwrap();
    let mut rng = Streams::new(seed).stream(0, 0, 0);
    let path = simulate_path(&bm, &natural(&[mu]), &[0.0], &grid, &mut rng).unwrap();
    let obs = ObservationModel::full(1, &[r]).unwrap();
    simulate_data(&path, &obs, &mut rng).unwrap()
}

// ---------------------------------------------------------- PMMH / CPMMH

#[test]
fn zero_variance_proposals_are_always_accepted() {
    let stub = KalmanStub {
        y: vec![0.3, 0.1, 0.9],
        q: 1.0,
        r: 0.5,
    };
    let out = pmmh_run(
        &stub,
        &ParamTransform::identity(1),
        &Prior::normal(1, 0.0, 10.0),
        &pm_settings(0.0, 200, 0.4),
        &Streams::new(1),
        &serial(),
    )
    .unwrap();
    assert_eq!(out.theta_acceptance.rate(), 1.0);
    assert!(out.theta.iter().all(|t| t[0] == 0.4));
    assert_eq!(out.iterations(), 200);
}

#[test]
fn flat_likelihood_recovers_the_prior() {
    let out = pmmh_run(
        &FlatStub,
        &ParamTransform::identity(1),
        &Prior::normal(1, 1.0, 2.0),
        &pm_settings(16.0, 100_000, 0.0),
        &Streams::new(2),
        &serial(),
    )
    .unwrap();
    let draws: Vec<f64> = out.theta.iter().step_by(50).map(|t| t[0]).collect();
    let p = ks_normal(&draws, 1.0, 2.0);
    assert!(p > 0.01, "KS p = {p}");
}

#[test]
fn pmmh_is_cpmmh_with_independent_variates() {
    let bm = brownian_drift(1.0);
    let obs = ObservationModel::full(1, &[0.5]).unwrap();
    let data = bm_data(5, 0.5, 0.5, 4);
    let init = InitialState::point(&[0.0]);
    let est = ParticleFilterEstimator::new(Problem::new(&bm, &obs, &data, &init, 4).unwrap(), true);
    let tr = ParamTransform::identity(1);
    let prior = Prior::normal(1, 0.0, 10.0);
    let s = pm_settings(0.2, 300, 0.0);
    let a = pmmh_run(&est, &tr, &prior, &s, &Streams::new(5), &serial()).unwrap();
    let b = cpmmh_run(
        &est,
        &tr,
        &prior,
        &s,
        &CnKernel::new(0.0).unwrap(),
        &Streams::new(5),
        &serial(),
    )
    .unwrap();
    assert_eq!(a.theta, b.theta);
    assert_eq!(a.log_lik, b.log_lik);
}

#[test]
fn fully_correlated_variates_repeat_the_estimate() {
    let bm = brownian_drift(1.0);
    let obs = ObservationModel::full(1, &[0.5]).unwrap();
    let data = bm_data(5, 0.5, 0.5, 4);
    let init = InitialState::point(&[0.0]);
    let est = ParticleFilterEstimator::new(Problem::new(&bm, &obs, &data, &init, 4).unwrap(), true);
    let out = cpmmh_run(
        &est,
        &ParamTransform::identity(1),
        &Prior::normal(1, 0.0, 10.0),
        &pm_settings(0.0, 50, 0.2),
        &CnKernel::new(1.0).unwrap(),
        &Streams::new(6),
        &serial(),
    )
    .unwrap();
    assert_eq!(out.theta_acceptance.rate(), 1.0);
    assert!(out.log_lik.windows(2).all(|w| w[0].to_bits() == w[1].to_bits()));
}

#[test]
fn pmmh_recovers_the_conjugate_drift_posterior() {
    let r = 0.3;
    let data = bm_data(10, 0.5, r, 7);
    let y: Vec<f64> = data.iter().map(|v| v[0]).collect();
    let (post_mean, post_sd) = conjugate_drift_posterior(&y, 0.0, 1.0, r, 10.0);
    let bm = brownian_drift(1.0);
    let obs = ObservationModel::full(1, &[r]).unwrap();
    let init = InitialState::point(&[0.0]);
    let est = ParticleFilterEstimator::new(Problem::new(&bm, &obs, &data, &init, 2).unwrap(), true);
    let mut s = pm_settings(2.5 * post_sd * post_sd, 40_000, 0.0);
    s.particles = 20;
    let out = cpmmh_run(
        &est,
        &ParamTransform::identity(1),
        &Prior::normal(1, 0.0, 10.0),
        &s,
        &CnKernel::new(0.9).unwrap(),
        &Streams::new(8),
        &serial(),
    )
    .unwrap();
    let draws: Vec<f64> = out.theta[4000..].iter().map(|t| t[0]).collect();
    assert!(
        (mean(&draws) - post_mean).abs() < 0.25 * post_sd,
        "{} vs {post_mean}",
        mean(&draws)
    );
    assert!(
        (var(&draws).sqrt() / post_sd - 1.0).abs() < 0.1,
        "{} vs {post_sd}",
        var(&draws).sqrt()
    );
}

#[test]
fn initialisation_fails_loudly() {
    struct Hopeless;
    impl LikelihoodEstimator<f64> for Hopeless {
        fn aux_len(&self, _: usize) -> usize {
            1
        }
        fn log_likelihood(&self, _: &ParamVector<f64>, _: &[f64], _: usize, _: &Workers) -> Result<f64> {
            Ok(f64::NEG_INFINITY)
        }
    }
    let err = pmmh_run(
        &Hopeless,
        &ParamTransform::identity(1),
        &Prior::Flat,
        &pm_settings(1.0, 10, 0.0),
        &Streams::new(1),
        &serial(),
    )
    .unwrap_err();
    assert!(matches!(err, sde_pmcmc::Error::InitFailure { attempts: 100 }));
}

// ----------------------------------------------------------------- aCPMMH

/// `dX = −θ₁X dt + θ₂√(1+X²) dW`: state-dependent diffusion that also
/// depends on the parameters, so the Jacobian terms do not cancel.
fn scaled_ou() -> FnDiffusion<f64> {
    FnDiffusion::new(
        1,
        2,
        |x: &[f64], th: &[f64], a: &mut [f64]| a[0] = -th[0] * x[0],
        |x: &[f64], th: &[f64], b: &mut Mat<f64>| b[(0, 0)] = th[1] * th[1] * (1.0 + x[0] * x[0]),
    )
}

fn beta_scaled_ou(x: f64, th: &[f64]) -> f64 {
    th[1] * th[1] * (1.0 + x * x)
}

/// Log of `p_e(x_{(s,e]}) · |∂x/∂u|` for one m = 2 interval driven by `u`,
/// written out from the Euler density and the bridge change of variables.
fn mis_interval_term(x_s: f64, x_e: f64, u: f64, th: &[f64]) -> f64 {
    let dt = 0.5;
    let b_s = beta_scaled_ou(x_s, th);
    let sd = (b_s * dt * 0.5).sqrt();
    let mid = x_s + (x_e - x_s) * 0.5 + sd * u;
    let b_mid = beta_scaled_ou(mid, th);
    ln_normal(mid, x_s - th[0] * x_s * dt, b_s * dt) + ln_normal(x_e, mid - th[0] * mid * dt, b_mid * dt) + sd.ln()
}

struct Instance {
    model: FnDiffusion<f64>,
    obs: ObservationModel<f64>,
    data: Vec<Vec<f64>>,
    init: InitialState<f64>,
}

impl Instance {
    fn problem(&self, m: usize) -> Problem<'_, f64> {
        Problem::new(&self.model, &self.obs, &self.data, &self.init, m).unwrap()
    }
}

fn scaled_ou_instance(n: usize, rng: &mut StreamRng) -> (Instance, Vec<Vec<f64>>) {
    let data = (0..n).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
    let x_o = (0..n).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
    let inst = Instance {
        model: scaled_ou(),
        obs: ObservationModel::full(1, &[0.5]).unwrap(),
        data,
        init: InitialState::gaussian(vec![0.3], Mat::from_diag(&[0.2])).unwrap(),
    };
    (inst, x_o)
}

#[test]
fn theta_ratio_equals_the_modified_innovation_scheme() {
    let tr = ParamTransform::all_log(2);
    let prior = Prior::normal(2, 0.0, 10.0);
    let s = Streams::new(21);
    for rep in 0..100 {
        let mut rng = s.stream(rep, 0, 0);
        let (inst, x_o) = scaled_ou_instance(3, &mut rng);
        let problem = inst.problem(2);
        let u = Innovations::standard(3, 1, 2, 1, &mut rng);
        let w = [rng.random_range(-1.5..0.5), rng.random_range(-1.0..0.5)];
        let w2 = [w[0] + rng.random_range(-0.3..0.3), w[1] + rng.random_range(-0.3..0.3)];
        let state = ChainState::new(&problem, &prior, tr.params(&w), x_o.clone(), u.clone(), &serial()).unwrap();
        let (ratio, _) = acpmmh_theta_log_ratio(&state, &problem, &prior, &tr.params(&w2), &serial()).unwrap();

        let x0 = 0.3 + 0.2f64.sqrt() * u.block(0)[0];
        let mut path = vec![x0];
        path.extend(x_o.iter().map(|v| v[0]));
        let u_mid = [u.block(0)[1], u.block(1)[0], u.block(2)[0]];
        let (th, th2) = (tr.to_natural(&w), tr.to_natural(&w2));
        let mut want = prior.log_density(&w2) - prior.log_density(&w);
        for t in 0..3 {
            want += mis_interval_term(path[t], path[t + 1], u_mid[t], &th2)
                - mis_interval_term(path[t], path[t + 1], u_mid[t], &th);
        }
        assert!(
            (ratio - want).abs() <= 1e-10 * want.abs().max(1.0),
            "rep {rep}: {ratio} vs {want}"
        );
    }
}

fn log_target(problem: &Problem<'_, f64>, prior: &Prior<f64>, s: &ChainState<f64>) -> f64 {
    let fresh = ChainState::new(problem, prior, s.theta.clone(), s.x_o.clone(), s.u.clone(), &serial()).unwrap();
    let log_phi: f64 = s.u.as_slice().iter().map(|v| -0.5 * v * v).sum();
    fresh.log_prior + fresh.log_joint_estimate() + log_phi
}

fn log_cn(to: &[f64], from: &[f64], rho: f64) -> f64 {
    let v = 1.0 - rho * rho;
    to.iter().zip(from).map(|(a, b)| -0.5 * (a - rho * b).powi(2) / v).sum()
}

/// Replays the proposal of a single-site move from a copy of its stream and
/// returns the proposed state, the brute-force log MH ratio and `ln U`.
fn replay_state_move(
    problem: &Problem<'_, f64>,
    prior: &Prior<f64>,
    state: &ChainState<f64>,
    t: usize,
    proposal: &RwmProposal<f64>,
    kernel: &CnKernel<f64>,
    mut rng: StreamRng,
) -> (ChainState<f64>, f64, f64) {
    let n = problem.n();
    let mut prop = state.clone();
    prop.x_o[t - 1] = proposal.propose(&state.x_o[t - 1], &mut rng);
    let touched: Vec<usize> = if t < n { vec![t - 1, t] } else { vec![t - 1] };
    let mut cn_ratio = 0.0;
    for &b in &touched {
        let new = kernel.propose(state.u.block(b), &mut rng);
        cn_ratio += log_cn(state.u.block(b), &new, kernel.rho()) - log_cn(&new, state.u.block(b), kernel.rho());
        prop.u.set_block(b, &new);
    }
    let log_u = uniform::<f64, _>(&mut rng).ln();
    let ratio = log_target(problem, prior, &prop) - log_target(problem, prior, state) + cn_ratio;
    (prop, ratio, log_u)
}

#[test]
fn state_moves_match_the_full_target_ratio() {
    let tr = ParamTransform::all_log(2);
    let prior = Prior::normal(2, 0.0, 10.0);
    let kernel = CnKernel::new(0.9).unwrap();
    let proposal = RwmProposal::diagonal(&[0.05]).unwrap();
    let s = Streams::new(33);
    let (mut accepted, mut rejected) = (0, 0);
    for rep in 0..200 {
        let mut rng = s.stream(rep, 0, 0);
        let (inst, x_o) = scaled_ou_instance(4, &mut rng);
        let problem = inst.problem(2);
        let u = Innovations::standard(4, 2, 2, 1, &mut rng);
        let mut state = ChainState::new(&problem, &prior, tr.params(&[-0.5, -0.7]), x_o, u, &serial()).unwrap();
        let t = 1 + (rep as usize % 4);
        let move_rng = s.stream(rep, 1, 0);
        let (prop, ratio, log_u) = replay_state_move(&problem, &prior, &state, t, &proposal, &kernel, move_rng.clone());
        let before = state.clone();
        let mut rng = move_rng;
        let acc = if t < 4 {
            acpmmh_xt_update(&mut state, &problem, t, &proposal, 1.0, &kernel, &mut rng).unwrap()
        } else {
            acpmmh_endpoint_update(&mut state, &problem, &proposal, 1.0, &kernel, &mut rng).unwrap()
        };
        assert_eq!(acc, log_u < ratio, "rep {rep}: ratio {ratio}, ln U {log_u}");
        let expect = if acc { &prop } else { &before };
        assert_eq!(state.x_o, expect.x_o);
        assert_eq!(state.u.as_slice(), expect.u.as_slice());
        assert!(state.caches_coherent(&problem, &serial()).unwrap());
        for b in 0..4 {
            if b + 1 != t && b != t {
                assert_eq!(
                    state.interval_log_est[b].to_bits(),
                    before.interval_log_est[b].to_bits()
                );
            }
            if b + 1 != t {
                assert_eq!(state.obs_log_density[b].to_bits(), before.obs_log_density[b].to_bits());
            }
        }
        if acc {
            accepted += 1;
        } else {
            rejected += 1;
        }
    }
    assert!(accepted > 10 && rejected > 10, "{accepted} / {rejected}");
}

#[test]
fn degenerate_moves_are_always_accepted() {
    let tr = ParamTransform::all_log(2);
    let prior = Prior::normal(2, 0.0, 10.0);
    let mut rng = Streams::new(40).stream(0, 0, 0);
    let (inst, x_o) = scaled_ou_instance(4, &mut rng);
    let problem = inst.problem(3);
    let u = Innovations::standard(4, 3, 3, 1, &mut rng);
    let mut state = ChainState::new(&problem, &prior, tr.params(&[-0.5, -0.7]), x_o, u, &serial()).unwrap();
    let snapshot = state.clone();
    let still = RwmProposal::diagonal(&[0.0]).unwrap();
    let still2 = RwmProposal::diagonal(&[0.0, 0.0]).unwrap();
    let frozen = CnKernel::new(1.0).unwrap();
    for i in 0..20 {
        let mut rng = Streams::new(41).stream(i, 0, 0);
        assert!(acpmmh_theta_update(&mut state, &problem, &tr, &prior, &still2, 1.0, &mut rng, &serial()).unwrap());
        for t in 1..4 {
            assert!(acpmmh_xt_update(&mut state, &problem, t, &still, 1.0, &frozen, &mut rng).unwrap());
        }
        assert!(acpmmh_endpoint_update(&mut state, &problem, &still, 1.0, &frozen, &mut rng).unwrap());
    }
    assert_eq!(state.x_o, snapshot.x_o);
    assert_eq!(state.theta.work, snapshot.theta.work);
    assert_eq!(state.interval_log_est, snapshot.interval_log_est);
    assert!(acpmmh_xt_update(&mut state, &problem, 4, &still, 1.0, &frozen, &mut rng).is_err());
    assert!(acpmmh_xt_update(&mut state, &problem, 0, &still, 1.0, &frozen, &mut rng).is_err());
}

#[test]
fn theta_moves_satisfy_detailed_balance_on_two_points() {
    // Restricting θ to {a, b} with the deterministic swap proposal, the MH
    // kernel must satisfy π(a)P(a→b) = π(b)P(b→a) for the augmented target.
    let tr = ParamTransform::all_log(2);
    let prior = Prior::normal(2, 0.0, 10.0);
    let s = Streams::new(50);
    for rep in 0..50 {
        let mut rng = s.stream(rep, 0, 0);
        let (inst, x_o) = scaled_ou_instance(4, &mut rng);
        let problem = inst.problem(3);
        let u = Innovations::standard(4, 2, 3, 1, &mut rng);
        let (a, b) = (tr.params(&[-0.4, -0.6]), tr.params(&[-0.9, -0.3]));
        let sa = ChainState::new(&problem, &prior, a.clone(), x_o.clone(), u.clone(), &serial()).unwrap();
        let sb = ChainState::new(&problem, &prior, b.clone(), x_o, u, &serial()).unwrap();
        let (r_ab, _) = acpmmh_theta_log_ratio(&sa, &problem, &prior, &b, &serial()).unwrap();
        let (r_ba, _) = acpmmh_theta_log_ratio(&sb, &problem, &prior, &a, &serial()).unwrap();
        let (pi_a, pi_b) = (log_target(&problem, &prior, &sa), log_target(&problem, &prior, &sb));
        let flow_ab = pi_a + r_ab.min(0.0);
        let flow_ba = pi_b + r_ba.min(0.0);
        assert!((flow_ab - flow_ba).abs() < 1e-9 * flow_ab.abs().max(1.0), "rep {rep}");
    }
}

fn acpmmh_settings(
    theta0: Vec<f64>,
    x_o0: Vec<Vec<f64>>,
    theta_var: Vec<f64>,
    state_var: Vec<f64>,
    rho: f64,
    iters: usize,
) -> AcpmmhSettings<f64> {
    AcpmmhSettings {
        particles: 1,
        n_iters: iters,
        kernel: CnKernel::new(rho).unwrap(),
        theta_proposal: RwmProposal::diagonal(&theta_var).unwrap(),
        state_proposals: vec![RwmProposal::diagonal(&state_var).unwrap()],
        theta0,
        x_o0,
        x_thin: 1,
        theta_adaptation: None,
        state_adaptation: None,
    }
}

#[test]
fn acpmmh_recovers_the_conjugate_drift_posterior() {
    let r = 0.1;
    let n = 20;
    let data = bm_data(n, 0.5, r, 60);
    let y: Vec<f64> = data.iter().map(|v| v[0]).collect();
    let (post_mean, post_sd) = conjugate_drift_posterior(&y, 0.0, 1.0, r, 10.0);
    let bm = brownian_drift(1.0);
    let obs = ObservationModel::full(1, &[r]).unwrap();
    let init = InitialState::point(&[0.0]);
    let problem = Problem::new(&bm, &obs, &data, &init, 2).unwrap();
    let mut settings = acpmmh_settings(vec![0.0], data.clone(), vec![0.15], vec![0.1], 0.99, 100_000);
    settings.x_thin = 0;
    let out = acpmmh_run(
        &problem,
        &ParamTransform::identity(1),
        &Prior::normal(1, 0.0, 10.0),
        &settings,
        &Streams::new(61),
        &serial(),
    )
    .unwrap();
    let draws: Vec<f64> = out.theta[5000..].iter().map(|t| t[0]).collect();
    let (m, sd) = (mean(&draws), var(&draws).sqrt());
    assert!((m - post_mean).abs() < 0.02, "mean {m} vs {post_mean}");
    assert!((sd / post_sd - 1.0).abs() < 0.05, "sd {sd} vs {post_sd}");
}

fn sqrt_problem_data(spec: &ModelSpec<f64>, sigma: f64, seed: u64) -> (ObservationModel<f64>, Vec<Vec<f64>>) {
    let obs = spec.observation(sigma).unwrap();
    let th = ParamVector::from_natural(&spec.theta_true, &spec.transform);
    let grid = TimeGrid::new(spec.default_n_obs, 5).unwrap();
    let mut rng = Streams::new(seed).stream(0, 0, 0);
    let path = simulate_path(spec.model.as_ref(), &th, &spec.x0, &grid, &mut rng).unwrap();
    let data = simulate_data(&path, &obs, &mut rng).unwrap();
    (obs, data)
}

#[test]
fn correlation_raises_state_acceptance() {
    let spec = square_root_model::<f64>();
    let (obs, data) = sqrt_problem_data(&spec, 5.0, 70);
    let init = spec.initial_state();
    let problem = Problem::new(spec.model.as_ref(), &obs, &data, &init, 5).unwrap();
    let x_o0: Vec<Vec<f64>> = data.iter().map(|y| vec![y[0].max(1.0)]).collect();
    let theta0 = spec.transform.to_work(&spec.theta_true);
    let rate = |rho: f64| {
        let mut s = acpmmh_settings(theta0.clone(), x_o0.clone(), vec![0.005, 0.005], vec![1.0], rho, 10_000);
        s.x_thin = 0;
        let out = acpmmh_run(&problem, &spec.transform, &spec.prior, &s, &Streams::new(71), &serial()).unwrap();
        out.state_acceptance.rate()
    };
    let (hi, lo) = (rate(0.99), rate(0.0));
    assert!(hi > lo, "rho=0.99: {hi}, rho=0: {lo}");
}

#[test]
fn chains_are_identical_for_any_worker_count() {
    let spec = lotka_volterra_model::<f64>();
    let obs = spec.observation(5.0).unwrap();
    let th = ParamVector::from_natural(&spec.theta_true, &spec.transform);
    let grid = TimeGrid::new(10, 5).unwrap();
    let mut rng = Streams::new(80).stream(0, 0, 0);
    let path = simulate_path(spec.model.as_ref(), &th, &spec.x0, &grid, &mut rng).unwrap();
    let data = simulate_data(&path, &obs, &mut rng).unwrap();
    let init = spec.initial_state();
    let problem = Problem::new(spec.model.as_ref(), &obs, &data, &init, 5).unwrap();
    let mut s = acpmmh_settings(
        spec.transform.to_work(&spec.theta_true),
        path.observed_states(),
        vec![0.001; 3],
        vec![4.0, 4.0],
        0.99,
        60,
    );
    s.particles = 2;
    let run = |w: usize| {
        acpmmh_run(
            &problem,
            &spec.transform,
            &spec.prior,
            &s,
            &Streams::new(81),
            &Workers::new(w),
        )
        .unwrap()
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.theta, b.theta);
    assert_eq!(a.x_o, b.x_o);
    assert_eq!(a.log_lik, b.log_lik);
    assert!(a.state_acceptance.rate() > 0.0);
    assert_eq!(a.x_o.len(), 60);
}

#[test]
fn run_rejects_bad_inputs() {
    let bm = brownian_drift(1.0);
    let obs = ObservationModel::full(1, &[0.1]).unwrap();
    let data = bm_data(4, 0.0, 0.1, 90);
    let init = InitialState::point(&[0.0]);
    let problem = Problem::new(&bm, &obs, &data, &init, 2).unwrap();
    let tr = ParamTransform::identity(1);
    let prior = Prior::normal(1, 0.0, 1.0);
    let mut s = acpmmh_settings(vec![0.0], data.clone(), vec![0.1], vec![0.1], 0.5, 5);
    s.x_o0.pop();
    assert!(acpmmh_run(&problem, &tr, &prior, &s, &Streams::new(1), &serial()).is_err());
    let mut s = acpmmh_settings(vec![0.0], data.clone(), vec![0.1], vec![0.1], 0.5, 5);
    s.particles = 0;
    assert!(acpmmh_run(&problem, &tr, &prior, &s, &Streams::new(1), &serial()).is_err());
    let s = acpmmh_settings(vec![0.0], data.clone(), vec![0.1], vec![0.1], 0.5, 5);
    let bounded = Prior::uniform(1, 1.0, 2.0);
    assert!(acpmmh_run(&problem, &tr, &bounded, &s, &Streams::new(1), &serial()).is_err());
}

#[test]
fn sweep_members_touch_disjoint_caches() {
    for n in 2..=20 {
        let s = odd_even_schedule(n);
        for sweep in [&s.odd, &s.even] {
            let mut intervals: Vec<usize> = sweep.iter().flat_map(|&t| [t - 1, t]).collect();
            let before = intervals.len();
            intervals.sort_unstable();
            intervals.dedup();
            assert_eq!(intervals.len(), before, "n={n}");
            assert!(intervals.iter().all(|&i| i < n));
        }
        assert_eq!(s.endpoint, n);
    }
}
