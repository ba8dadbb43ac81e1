mod common;

use common::{random_graph, rng};
use epivax::dynamics::{
    default_dt, estimate_decay_rate, simulate_exact_markov, simulate_exact_markov_at,
    simulate_linear_bound, simulate_meanfield, simulate_meanfield_sampled, Trajectory,
};
use epivax::spectral::{critical_beta, lambda_max_effective};
use epivax::{Error, Graph, RateMatrices};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

/// Marginals of the exact chain from the Kolmogorov forward equation.
fn master_equation_marginals(g: &Graph, r: &RateMatrices, x0: &[bool], times: &[f64]) -> Vec<Vec<f64>> {
    let n = g.n();
    let states = 1usize << n;
    let mut gen = DMatrix::zeros(states, states);
    for x in 0..states {
        for i in 0..n {
            let infected = x >> i & 1 == 1;
            let rate = if infected {
                r.delta()[i]
            } else {
                r.beta()[i] * g.neighbors(i).iter().filter(|&&j| x >> j & 1 == 1).count() as f64
            };
            if rate > 0.0 {
                let y = x ^ (1 << i);
                gen[(y, x)] += rate;
                gen[(x, x)] -= rate;
            }
        }
    }
    let start = x0.iter().enumerate().filter(|(_, &b)| b).fold(0, |acc, (i, _)| acc | 1 << i);
    let mut pi0 = DVector::zeros(states);
    pi0[start] = 1.0;
    times
        .iter()
        .map(|&t| {
            let pi = (&gen * t).exp() * &pi0;
            (0..n)
                .map(|i| (0..states).filter(|x| x >> i & 1 == 1).map(|x| pi[x]).sum())
                .collect()
        })
        .collect()
}

fn max_norm(p: &[f64]) -> f64 {
    p.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linear_bound_dominates_meanfield(
        n in 2usize..10,
        seed in any::<u64>(),
        mult in 0.5f64..4.0,
        p0 in 0.01f64..1.0,
    ) {
        let g = random_graph(n, 0.5, &mut rng(seed));
        let beta = mult * critical_beta(&g, 0.2).unwrap();
        let r = RateMatrices::homogeneous(n, beta, 0.2).unwrap();
        let dt = default_dt(&g, &r);
        let x0 = vec![p0; n];
        let nl = simulate_meanfield(&g, &r, &x0, 20.0, dt).unwrap();
        let lin = simulate_linear_bound(&g, &r, &x0, 20.0, dt).unwrap();
        prop_assert_eq!(&nl.times, &lin.times);
        for (a, b) in nl.states.iter().zip(&lin.states) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!(*x <= y + 1e-8);
                prop_assert!((0.0..=1.0).contains(x));
            }
        }
        prop_assert!(nl.times.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn disease_free_state_is_fixed() {
    let g = random_graph(6, 0.5, &mut rng(1));
    let r = RateMatrices::homogeneous(6, 0.5, 0.1).unwrap();
    for traj in [
        simulate_meanfield(&g, &r, &[0.0; 6], 10.0, 0.01).unwrap(),
        simulate_linear_bound(&g, &r, &[0.0; 6], 10.0, 0.01).unwrap(),
    ] {
        assert!(traj.states.iter().flatten().all(|&p| p == 0.0));
    }
}

#[test]
fn isolated_node_decays_exponentially() {
    let g = Graph::from_edges(1, []).unwrap();
    let r = RateMatrices::homogeneous(1, 0.3, 0.1).unwrap();
    let traj = simulate_meanfield(&g, &r, &[0.5], 10.0, 0.01).unwrap();
    assert!((traj.last().unwrap()[0] - 0.5 * (-1.0_f64).exp()).abs() < 1e-8);
}

#[test]
fn path_run_matches_fine_step_reference() {
    let g = Graph::from_edges(2, [(0, 1)]).unwrap();
    let r = RateMatrices::new(vec![0.3, 0.3], vec![0.1, 0.1]).unwrap();
    let coarse = simulate_meanfield(&g, &r, &[1.0, 0.0], 20.0, 0.01).unwrap();
    let fine = simulate_meanfield(&g, &r, &[1.0, 0.0], 20.0, 1e-4).unwrap();
    for (a, b) in coarse.last().unwrap().iter().zip(fine.last().unwrap()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn linear_bound_matches_matrix_exponential() {
    let g = random_graph(8, 0.4, &mut rng(9));
    let mut r_ = rng(10);
    let beta: Vec<f64> = (0..8).map(|_| r_.random_range(0.02..0.1)).collect();
    let delta: Vec<f64> = (0..8).map(|_| r_.random_range(0.1..0.3)).collect();
    let r = RateMatrices::new(beta.clone(), delta.clone()).unwrap();
    let p0: Vec<f64> = (0..8).map(|_| r_.random_range(0.0..1.0)).collect();
    let traj = simulate_linear_bound(&g, &r, &p0, 15.0, 0.01).unwrap();

    // exp(t(BA − D)) = B^{1/2} exp(tM) B^{-1/2} with M symmetric.
    let m = epivax::spectral::symmetric_spreading_matrix(&g, &beta, &delta);
    let eig = m.symmetric_eigen();
    let sqrt_b = DVector::from_iterator(8, beta.iter().map(|b| b.sqrt()));
    let x = DVector::from_iterator(8, p0.iter().zip(&beta).map(|(p, b)| p / b.sqrt()));
    for (k, &t) in traj.times.iter().enumerate().step_by(150) {
        let e = eig.eigenvalues.map(|l| (l * t).exp());
        let y = &eig.eigenvectors * DMatrix::from_diagonal(&e) * eig.eigenvectors.transpose() * &x;
        let oracle = y.component_mul(&sqrt_b);
        let got = DVector::from_vec(traj.states[k].clone());
        assert!((got - &oracle).norm() <= 1e-6 * oracle.norm().max(1e-12), "t = {t}");
    }
}

#[test]
fn fitted_rate_of_known_exponentials() {
    let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.1).collect();
    let states = times.iter().map(|t| vec![(-0.3 * t).exp(), 0.5 * (-0.3 * t).exp()]).collect();
    let traj = Trajectory { times: times.clone(), states };
    assert!((estimate_decay_rate(&traj, 0.5).unwrap() - 0.3).abs() < 1e-6);
    let zeros = Trajectory { times, states: vec![vec![0.0]; 200] };
    assert_eq!(estimate_decay_rate(&zeros, 0.5).unwrap(), f64::INFINITY);
}

#[test]
fn linear_run_decays_at_the_spectral_rate() {
    let g = random_graph(10, 0.4, &mut rng(2));
    let r = RateMatrices::homogeneous(10, 0.5 * critical_beta(&g, 0.2).unwrap(), 0.2).unwrap();
    let rate = -lambda_max_effective(&g, &r).unwrap();
    let traj = simulate_linear_bound(&g, &r, &[0.5; 10], 30.0 / rate, default_dt(&g, &r)).unwrap();
    assert!(estimate_decay_rate(&traj, 0.5).unwrap() >= 0.95 * rate);
}

#[test]
fn meanfield_decays_at_least_at_eps_when_stable() {
    for seed in 0..5 {
        let g = random_graph(9, 0.5, &mut rng(seed));
        let (delta, eps) = (0.2, 0.05);
        let beta = (delta - eps) / g.spectral_radius();
        let r = RateMatrices::homogeneous(9, beta, delta).unwrap();
        for p0 in [0.05, 0.5, 1.0] {
            let traj = simulate_meanfield_sampled(&g, &r, &[p0; 9], 300.0, default_dt(&g, &r), 10).unwrap();
            assert!(estimate_decay_rate(&traj, 0.5).unwrap() >= 0.95 * eps);
        }
    }
}

#[test]
fn supercritical_run_stays_endemic() {
    for seed in 0..5 {
        let g = random_graph(9, 0.5, &mut rng(seed));
        let r = RateMatrices::homogeneous(9, 2.0 * critical_beta(&g, 0.1).unwrap(), 0.1).unwrap();
        assert!(lambda_max_effective(&g, &r).unwrap() > 0.0);
        let traj = simulate_meanfield(&g, &r, &[0.01; 9], 200.0, default_dt(&g, &r)).unwrap();
        assert!(max_norm(traj.last().unwrap()) > 1e-6);
    }
}

#[test]
fn pure_death_matches_exponential() {
    let g = Graph::from_edges(1, []).unwrap();
    let r = RateMatrices::homogeneous(1, 0.5, 0.4).unwrap();
    let est = simulate_exact_markov(&g, &r, &[true], 5.0, 20_000, 3).unwrap();
    for (k, &t) in est.times.iter().enumerate() {
        let exact = (-0.4 * t).exp();
        let se = (exact * (1.0 - exact) / 20_000.0).sqrt();
        assert!((est.mean[k][0] - exact).abs() <= 4.0 * se + 1e-12, "t = {t}");
    }
}

#[test]
fn gillespie_matches_master_equation() {
    let cases = [
        (Graph::from_edges(2, [(0, 1)]).unwrap(), vec![true, true]),
        (Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap(), vec![true, false, false]),
        (common::complete(4), vec![false, true, false, true]),
    ];
    for (case, (g, x0)) in cases.iter().enumerate() {
        let n = g.n();
        let r = RateMatrices::new(
            (0..n).map(|i| 0.3 + 0.1 * i as f64).collect(),
            (0..n).map(|i| 0.4 + 0.05 * i as f64).collect(),
        )
        .unwrap();
        let est = simulate_exact_markov_at(g, &r, x0, 6.0, 16, 20_000, 100 + case as u64).unwrap();
        let exact = master_equation_marginals(g, &r, x0, &est.times);
        for k in 0..est.times.len() {
            for i in 0..n {
                let p = exact[k][i];
                let se = (p * (1.0 - p) / 20_000.0).sqrt();
                assert!(
                    (est.mean[k][i] - p).abs() <= 4.0 * se + 1e-9,
                    "case {case}, t = {}, node {i}: {} vs {p}",
                    est.times[k],
                    est.mean[k][i]
                );
            }
        }
    }
}

#[test]
fn exact_chain_is_seed_deterministic_and_bounded_in_size() {
    let g = random_graph(6, 0.5, &mut rng(4));
    let r = RateMatrices::homogeneous(6, 0.3, 0.2).unwrap();
    let x0 = [true, false, true, false, false, false];
    let a = simulate_exact_markov(&g, &r, &x0, 5.0, 500, 9).unwrap();
    let b = simulate_exact_markov(&g, &r, &x0, 5.0, 500, 9).unwrap();
    assert_eq!(a, b);
    let big = Graph::barabasi_albert(21, 2, 0).unwrap();
    let r = RateMatrices::homogeneous(21, 0.1, 0.1).unwrap();
    let err = simulate_exact_markov(&big, &r, &[true; 21], 1.0, 10, 0).unwrap_err();
    assert!(matches!(err, Error::TooLarge { .. }));
}

#[test]
fn meanfield_is_deterministic() {
    let g = random_graph(7, 0.5, &mut rng(8));
    let r = RateMatrices::homogeneous(7, 0.2, 0.1).unwrap();
    let a = simulate_meanfield(&g, &r, &[0.3; 7], 10.0, 0.05).unwrap();
    let b = simulate_meanfield(&g, &r, &[0.3; 7], 10.0, 0.05).unwrap();
    assert_eq!(a, b);
}
