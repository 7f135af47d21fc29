mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use sde_pmcmc::filter::*;
use sde_pmcmc::models::lotka_volterra_model;
use sde_pmcmc::rng::{std_normal_cdf, Streams};
use sde_pmcmc::sde::*;
use sde_pmcmc::Workers;

const Y: [f64; 5] = [0.9, 1.4, 2.6, 3.1, 4.4];
const R: f64 = 0.5;
const SIGMA: f64 = 0.8;
const MU: f64 = 0.7;

fn bm_estimates(particles: usize, m: usize, reps: usize, sort: bool, seed: u64) -> Vec<f64> {
    let bm = brownian_drift(SIGMA);
    let obs = ObservationModel::full(1, &[R]).unwrap();
    let data: Vec<Vec<f64>> = Y.iter().map(|&v| vec![v]).collect();
    let init = InitialState::point(&[0.0]);
    let problem = Problem::new(&bm, &obs, &data, &init, m).unwrap();
    let layout = AuxLayout::new(Y.len(), particles, m, 1);
    let th = natural(&[MU]);
    let s = Streams::new(seed);
    (0..reps)
        .map(|r| {
            let u = AuxiliaryVariates::standard(layout, &mut s.stream(r as u64, 0, 0));
            run_filter(&problem, &th, &u, sort, &Workers::serial()).unwrap()
        })
        .collect()
}

#[test]
fn equal_weights_select_each_particle_once() {
    for z in [-2.0, 0.0, 0.3, 1.5] {
        assert_eq!(systematic_resample(&[0.25; 4], z).unwrap(), vec![0, 1, 2, 3]);
    }
}

#[test]
fn point_mass_weights_select_one_particle() {
    assert_eq!(systematic_resample(&[1.0, 0.0, 0.0, 0.0], 0.4).unwrap(), vec![0; 4]);
    assert!(systematic_resample(&[0.0, 0.0], 0.4).is_err());
}

#[test]
fn ancestors_follow_the_cumulative_rule() {
    let w = [0.1, 0.4, 0.2, 0.3];
    let z = -0.3;
    let u = std_normal_cdf(z);
    let a = systematic_resample(&w, z).unwrap();
    let cum: Vec<f64> = w
        .iter()
        .scan(0.0, |c, v| {
            *c += v;
            Some(*c)
        })
        .collect();
    for (i, &ai) in a.iter().enumerate() {
        let target = (i as f64 + u) / 4.0;
        let want = cum.iter().position(|&c| c >= target).unwrap();
        assert_eq!(ai, want);
    }
}

#[test]
fn offspring_frequencies_match_weights() {
    let w = [0.05, 0.3, 0.15, 0.2, 0.1, 0.2];
    let n = w.len() as f64;
    let reps = 100_000;
    let mut rng = Streams::new(2).stream(0, 0, 0);
    let mut counts = [0.0; 6];
    let mut counts_sq = [0.0; 6];
    for _ in 0..reps {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        let mut c = [0.0; 6];
        for a in systematic_resample(&w, z).unwrap() {
            c[a] += 1.0;
        }
        for j in 0..6 {
            counts[j] += c[j];
            counts_sq[j] += c[j] * c[j];
        }
    }
    for j in 0..6 {
        let mean = counts[j] / reps as f64;
        let sd = ((counts_sq[j] / reps as f64 - mean * mean) / reps as f64).sqrt();
        assert!((mean - n * w[j]).abs() <= 3.0 * sd.max(1e-3), "j={j}: {mean}");
    }
}

fn greedy_reference(states: &[f64], d: usize) -> Vec<usize> {
    let n = states.len() / d;
    let x = |i: usize| &states[i * d..(i + 1) * d];
    let mut first = 0;
    for i in 1..n {
        if x(i)[0] < x(first)[0] {
            first = i;
        }
    }
    let mut order = vec![first];
    let mut used = vec![false; n];
    used[first] = true;
    while order.len() < n {
        let last = *order.last().unwrap();
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for i in 0..n {
            if used[i] {
                continue;
            }
            let dist: f64 = x(i).iter().zip(x(last)).map(|(a, b)| (a - b).powi(2)).sum();
            if dist < best_d {
                best_d = dist;
                best = Some(i);
            }
        }
        let b = best.unwrap();
        used[b] = true;
        order.push(b);
    }
    order
}

#[test]
fn euclidean_sort_examples() {
    assert_eq!(euclidean_sort(&[5.0, 1.0], 2), vec![0]);
    assert_eq!(euclidean_sort(&[3.0, 1.0, 2.0], 1), vec![1, 2, 0]);
    // Ties in the first component and equal distances resolve to the lower index.
    assert_eq!(euclidean_sort(&[1.0, 1.0, 0.0, 2.0, 1.0], 1), vec![2, 0, 1, 4, 3]);
}

proptest! {
    #[test]
    fn euclidean_sort_matches_brute_force(states in prop::collection::vec(-10.0f64..10.0, 2..40)) {
        let d = 2;
        let states = &states[..states.len() / d * d];
        if states.is_empty() {
            return Ok(());
        }
        prop_assert_eq!(euclidean_sort(states, d), greedy_reference(states, d));
    }

    #[test]
    fn resampled_counts_are_within_one_of_expectation(
        raw in prop::collection::vec(0.0f64..1.0, 1..30),
        z in -3.0f64..3.0,
    ) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-6);
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let n = w.len();
        let a = systematic_resample(&w, z).unwrap();
        prop_assert_eq!(a.len(), n);
        let mut counts = vec![0usize; n];
        for &i in &a {
            counts[i] += 1;
        }
        for j in 0..n {
            prop_assert!((counts[j] as f64 - n as f64 * w[j]).abs() < 1.0 + 1e-9);
        }
        prop_assert!(a.windows(2).all(|p| p[0] <= p[1]));
    }
}

#[test]
fn single_observation_estimate_is_exact() {
    // With one interval the bridge proposal is the exact conditional, so the
    // weight equals the predictive density for every u.
    let bm = brownian_drift(SIGMA);
    let obs = ObservationModel::full(1, &[R]).unwrap();
    let data = vec![vec![1.3]];
    let init = InitialState::point(&[0.2]);
    let problem = Problem::new(&bm, &obs, &data, &init, 4).unwrap();
    let want = ln_normal(1.3, 0.2 + MU, SIGMA * SIGMA + R);
    let s = Streams::new(5);
    for r in 0..10 {
        let u = AuxiliaryVariates::standard(AuxLayout::new(1, 3, 4, 1), &mut s.stream(r, 0, 0));
        let ll = run_filter(&problem, &natural(&[MU]), &u, true, &Workers::serial()).unwrap();
        assert_close(ll, want, 1e-12);
    }
}

#[test]
fn vanishing_diffusion_follows_the_euler_skeleton() {
    let drift = ou(1e-9);
    let obs = ObservationModel::full(1, &[50.0]).unwrap();
    let data: Vec<Vec<f64>> = Y.iter().map(|&v| vec![v]).collect();
    let init = InitialState::point(&[2.0]);
    let problem = Problem::new(&drift, &obs, &data, &init, 1).unwrap();
    let u = AuxiliaryVariates::standard(AuxLayout::new(5, 1, 1, 1), &mut Streams::new(6).stream(0, 0, 0));
    let ll = run_filter(&problem, &natural(&[0.3]), &u, false, &Workers::serial()).unwrap();
    let mut x = 2.0;
    let mut want = 0.0;
    for y in Y {
        x -= 0.3 * x;
        want += ln_normal(y, x, 50.0);
    }
    assert_close(ll, want, 1e-6);
}

#[test]
fn estimator_is_unbiased_on_exp_scale() {
    let exact = kalman_random_walk(&Y, 0.0, MU, SIGMA * SIGMA, R);
    for (particles, m) in [(1, 2), (5, 5), (25, 10)] {
        let ratios: Vec<f64> = bm_estimates(particles, m, 10_000, true, 11 + m as u64)
            .iter()
            .map(|ll| (ll - exact).exp())
            .collect();
        let (mean, se) = (mean(&ratios), std_err(&ratios));
        assert!((mean - 1.0).abs() <= 3.0 * se, "N={particles} m={m}: {mean} ± {se}");
    }
}

#[test]
fn sorting_leaves_the_estimator_distribution_unchanged() {
    let sorted = bm_estimates(5, 5, 10_000, true, 21);
    let plain = bm_estimates(5, 5, 10_000, false, 22);
    let p = ks_two_sample(&sorted, &plain);
    assert!(p > 0.01, "KS p = {p}");
}

fn lv_problem_parts() -> (sde_pmcmc::models::ModelSpec<f64>, ObservationModel<f64>, Vec<Vec<f64>>) {
    let spec = lotka_volterra_model::<f64>();
    let obs = spec.observation(10.0).unwrap();
    let th = ParamVector::from_natural(&spec.theta_true, &spec.transform);
    let grid = TimeGrid::new(10, 10).unwrap();
    let mut rng = Streams::new(3).stream(0, 0, 0);
    let path = simulate_path(spec.model.as_ref(), &th, &spec.x0, &grid, &mut rng).unwrap();
    let data = simulate_data(&path, &obs, &mut rng).unwrap();
    (spec, obs, data)
}

#[test]
fn estimates_are_deterministic_and_worker_independent() {
    let (spec, obs, data) = lv_problem_parts();
    let init = spec.initial_state();
    let problem = Problem::new(spec.model.as_ref(), &obs, &data, &init, 10).unwrap();
    let th = ParamVector::from_natural(&spec.theta_true, &spec.transform);
    let u = AuxiliaryVariates::standard(AuxLayout::new(10, 40, 10, 2), &mut Streams::new(9).stream(0, 0, 0));
    let a = run_filter(&problem, &th, &u, true, &Workers::serial()).unwrap();
    let b = run_filter(&problem, &th, &u, true, &Workers::serial()).unwrap();
    let c = run_filter(&problem, &th, &u, true, &Workers::new(4)).unwrap();
    assert!(a.is_finite());
    assert_eq!(a.to_bits(), b.to_bits());
    assert_eq!(a.to_bits(), c.to_bits());
}

#[test]
fn relabelling_initial_particles_leaves_sorted_estimate_unchanged() {
    let (spec, obs, data) = lv_problem_parts();
    let init = spec.initial_state();
    let problem = Problem::new(spec.model.as_ref(), &obs, &data, &init, 10).unwrap();
    let th = ParamVector::from_natural(&spec.theta_true, &spec.transform);
    let layout = AuxLayout::new(10, 8, 10, 2);
    let u = AuxiliaryVariates::standard(layout, &mut Streams::new(10).stream(0, 0, 0));
    let perm = [3, 7, 0, 5, 1, 6, 2, 4];
    let mut v = u.clone().into_vec();
    let src = u.as_slice();
    for (i, &p) in perm.iter().enumerate() {
        v[layout.initial_range(i)].copy_from_slice(&src[layout.initial_range(p)]);
        v[layout.propagation_range(0, i)].copy_from_slice(&src[layout.propagation_range(0, p)]);
    }
    let w = AuxiliaryVariates::from_vec(layout, v).unwrap();
    let a = run_filter(&problem, &th, &u, true, &Workers::serial()).unwrap();
    let b = run_filter(&problem, &th, &w, true, &Workers::serial()).unwrap();
    assert_close(a, b, 1e-10 * a.abs());
}

#[test]
fn failing_weights_give_negative_infinity() {
    let broken = FnDiffusion::new(
        1,
        1,
        |x: &[f64], _: &[f64], a: &mut [f64]| a[0] = if x[0] > 0.5 { f64::NAN } else { 0.0 },
        |_: &[f64], _: &[f64], b: &mut sde_pmcmc::linalg::Mat<f64>| b[(0, 0)] = 1e-4,
    );
    let obs = ObservationModel::full(1, &[1e-4]).unwrap();
    let data = vec![vec![1.0], vec![2.0]];
    let init = InitialState::point(&[0.0]);
    let problem = Problem::new(&broken, &obs, &data, &init, 2).unwrap();
    let u = AuxiliaryVariates::zeros(AuxLayout::new(2, 3, 2, 1));
    let ll = run_filter(&problem, &natural(&[0.0]), &u, true, &Workers::serial()).unwrap();
    assert_eq!(ll, f64::NEG_INFINITY);
}

#[test]
fn mismatched_variates_are_rejected() {
    let bm = brownian_drift(1.0);
    let obs = ObservationModel::full(1, &[1.0]).unwrap();
    let data = vec![vec![1.0]];
    let init = InitialState::point(&[0.0]);
    let problem = Problem::new(&bm, &obs, &data, &init, 2).unwrap();
    let u = AuxiliaryVariates::zeros(AuxLayout::new(1, 3, 5, 1));
    assert!(run_filter(&problem, &natural(&[0.0]), &u, true, &Workers::serial()).is_err());
}
