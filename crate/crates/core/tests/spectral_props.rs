mod common;

use common::{complete, random_graph, rng, star};
use epivax::spectral::{
    critical_beta, lambda_max_effective, psd_project, smallest_eigenvalue, stability_margin,
};
use epivax::{Graph, RateMatrices};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn instance() -> impl Strategy<Value = (Graph, Vec<f64>, Vec<f64>)> {
    (2usize..=14, any::<u64>(), 0.1f64..0.9).prop_flat_map(|(n, seed, p)| {
        let g = random_graph(n, p, &mut rng(seed));
        (
            Just(g),
            prop::collection::vec(0.01f64..1.0, n),
            prop::collection::vec(0.05f64..1.0, n),
        )
    })
}

fn nonsymmetric(g: &Graph, beta: &[f64], delta: &[f64]) -> DMatrix<f64> {
    let mut m = g.adjacency();
    for i in 0..g.n() {
        for j in 0..g.n() {
            m[(i, j)] *= beta[i];
        }
        m[(i, i)] -= delta[i];
    }
    m
}

proptest! {
    #[test]
    fn lowering_one_rate_never_raises_the_eigenvalue(
        (g, beta, delta) in instance(),
        pick in any::<prop::sample::Index>(),
        factor in 0.0f64..1.0,
    ) {
        let i = pick.index(g.n());
        let before = lambda_max_effective(&g, &RateMatrices::new(beta.clone(), delta.clone()).unwrap()).unwrap();
        let mut lowered = beta.clone();
        lowered[i] = (lowered[i] * factor).max(1e-6);
        let after = lambda_max_effective(&g, &RateMatrices::new(lowered, delta).unwrap()).unwrap();
        prop_assert!(after <= before + 1e-12 * (1.0 + before.abs()));
    }

    #[test]
    fn symmetric_form_matches_nonsymmetric_spectrum((g, beta, delta) in instance()) {
        let lam = lambda_max_effective(&g, &RateMatrices::new(beta.clone(), delta.clone()).unwrap()).unwrap();
        let oracle = nonsymmetric(&g, &beta, &delta)
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((lam - oracle).abs() < 1e-8, "{lam} vs {oracle}");
    }

    #[test]
    fn margin_and_eigenvalue_agree_on_feasibility((g, beta, delta) in instance(), frac in 0.0f64..0.5) {
        let eps = frac * delta.iter().copied().fold(f64::INFINITY, f64::min);
        let r = RateMatrices::new(beta, delta).unwrap();
        let lam = lambda_max_effective(&g, &r).unwrap();
        let margin = stability_margin(&g, &r, eps).unwrap();
        if (lam + eps).abs() > 1e-8 && margin.abs() > 1e-8 {
            prop_assert_eq!(lam <= -eps, margin >= 0.0);
        }
    }

    #[test]
    fn projection_is_idempotent_and_psd(seed in any::<u64>(), n in 1usize..8) {
        let mut r = rng(seed);
        let raw = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
        let m = (&raw + raw.transpose()) * 0.5;
        let p = psd_project(&m).unwrap();
        prop_assert!(smallest_eigenvalue(&p) >= -1e-10);
        let pp = psd_project(&p).unwrap();
        prop_assert!((&pp - &p).abs().max() < 1e-12);
    }
}

#[test]
fn projection_is_nearest_among_sampled_psd_matrices() {
    let mut r = rng(11);
    let raw = DMatrix::from_fn(6, 6, |_, _| r.random_range(-1.0..1.0));
    let m = (&raw + raw.transpose()) * 0.5;
    let proj = psd_project(&m).unwrap();
    let best = (&proj - &m).norm();
    for _ in 0..100 {
        let f = DMatrix::from_fn(6, 6, |_, _| r.random_range(-1.0..1.0));
        let candidate = &f * f.transpose();
        assert!(best <= (&candidate - &m).norm() + 1e-12);
    }
}

#[test]
fn psd_input_is_unchanged() {
    let f = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.2, 1.0, 0.3, 0.0, 0.1, 2.0]);
    let m = &f * f.transpose();
    assert!((psd_project(&m).unwrap() - &m).abs().max() < 1e-12);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 2.0]));
    let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 2.0]));
    assert!((psd_project(&d).unwrap() - expected).abs().max() < 1e-12);
}

#[test]
fn critical_rates_of_small_graphs() {
    assert!((critical_beta(&complete(3), 0.2).unwrap() - 0.1).abs() < 1e-15);
    assert!((critical_beta(&star(4), 1.0).unwrap() - 0.5).abs() < 1e-15);
    assert!(critical_beta(&Graph::from_edges(3, []).unwrap(), 1.0).is_err());
}

#[test]
fn homogeneous_boundary_has_zero_margin() {
    let g = random_graph(12, 0.4, &mut rng(3));
    let (delta, eps) = (0.2, 0.05);
    let beta = (delta - eps) / g.spectral_radius();
    let r = RateMatrices::homogeneous(12, beta, delta).unwrap();
    assert!(stability_margin(&g, &r, eps).unwrap().abs() < 1e-9);
    assert!((lambda_max_effective(&g, &r).unwrap() + eps).abs() < 1e-9);
}

#[test]
fn eps_at_smallest_curing_rate_is_rejected() {
    let g = complete(3);
    let r = RateMatrices::new(vec![0.1; 3], vec![0.3, 0.2, 0.4]).unwrap();
    let err = stability_margin(&g, &r, 0.2).unwrap_err().to_string();
    assert!(err.contains("node 1"), "{err}");
}

#[test]
fn large_graphs_use_the_iterative_path() {
    let g = Graph::barabasi_albert(600, 3, 1).unwrap();
    let mut r = rng(5);
    let beta: Vec<f64> = (0..600).map(|_| r.random_range(0.01..0.05)).collect();
    let delta: Vec<f64> = (0..600).map(|_| r.random_range(0.1..0.3)).collect();
    let lam = lambda_max_effective(&g, &RateMatrices::new(beta.clone(), delta.clone()).unwrap()).unwrap();
    let dense = epivax::spectral::symmetric_spreading_matrix(&g, &beta, &delta)
        .symmetric_eigenvalues()
        .max();
    assert!((lam - dense).abs() <= 1e-8 * dense.abs().max(1.0), "{lam} vs {dense}");
}
