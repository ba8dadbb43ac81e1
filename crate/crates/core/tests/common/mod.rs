#![allow(dead_code)]

use std::path::PathBuf;

use epivax::graph::parse_edge_list;
use epivax::spectral::critical_beta;
use epivax::{fractional, CostForm, EpidemicInstance, Graph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SUBSTITUTE_N: usize = 247;
pub const SUBSTITUTE_ATTACH: usize = 4;
pub const SUBSTITUTE_SEED: u64 = 5;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

pub fn substitute_graph() -> Graph {
    parse_edge_list(&std::fs::read_to_string(fixture("ba247.edges")).unwrap()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi graph with at least one edge when `n >= 2`.
pub fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    if edges.is_empty() && n >= 2 {
        edges.push((0, 1));
    }
    Graph::from_edges(n, edges).unwrap()
}

pub fn complete(n: usize) -> Graph {
    Graph::from_edges(n, (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v)))).unwrap()
}

pub fn star(leaves: usize) -> Graph {
    Graph::from_edges(leaves + 1, (1..=leaves).map(|v| (0, v))).unwrap()
}

/// Experimental protocol: δ = 0.1, β̄ = multiplier·β_c, β̲ = 0.2·β̄, unit costs.
pub fn protocol_instance(g: Graph, multiplier: f64, eps: f64, form: CostForm) -> EpidemicInstance {
    let bc = critical_beta(&g, 0.1).unwrap();
    EpidemicInstance::homogeneous(g, 0.1, multiplier * bc, 0.2, eps, form).unwrap()
}

/// Heterogeneous instance that is feasible by construction: β̲ is scaled
/// down until full vaccination meets the spectral condition.
pub fn random_instance(g: Graph, rng: &mut ChaCha8Rng, form: CostForm) -> EpidemicInstance {
    let n = g.n();
    let delta: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.3)).collect();
    let dmin = delta.iter().copied().fold(f64::INFINITY, f64::min);
    let eps = rng.random_range(0.0..0.5 * dmin);
    let lambda = g.spectral_radius().max(1.0);
    let beta_hi: Vec<f64> = (0..n)
        .map(|_| rng.random_range(0.5..3.0) * dmin / lambda)
        .collect();
    let ratio: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.6)).collect();
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut scale = 1.0;
    loop {
        let beta_lo: Vec<f64> = (0..n).map(|i| scale * ratio[i] * beta_hi[i]).collect();
        match EpidemicInstance::new(
            g.clone(),
            delta.clone(),
            beta_lo,
            beta_hi.clone(),
            eps,
            weights.clone(),
            form,
        ) {
            Ok(inst) => return inst,
            Err(_) => scale *= 0.5,
        }
    }
}

/// The n ≤ 12 suite: seeded preferential-attachment graphs under the
/// experimental protocol, multipliers cycling through the sweep values.
pub fn small_suite() -> Vec<EpidemicInstance> {
    (0..100u64)
        .map(|s| {
            let mut r = rng(s);
            let n = r.random_range(5..=12);
            let attach = r.random_range(1..=3usize).min(n - 1);
            let g = Graph::barabasi_albert(n, attach, s).unwrap();
            let mult = [1.2, 1.8, 2.4][s as usize % 3];
            protocol_instance(g, mult, 0.0, CostForm::Affine)
        })
        .collect()
}

/// Optimal value of the Lagrangian dual, through its equivalent convex
/// problem: a reciprocal-cost fractional allocation with `T_i = c_i(β̄_i − β̲_i)`.
pub fn exact_dual_bound(inst: &EpidemicInstance) -> f64 {
    let n = inst.n();
    let weights = (0..n)
        .map(|i| inst.weights()[i] * (inst.beta_hi()[i] - inst.beta_lo()[i]))
        .collect();
    let recip = EpidemicInstance::new(
        inst.graph().clone(),
        inst.delta().to_vec(),
        inst.beta_lo().to_vec(),
        inst.beta_hi().to_vec(),
        inst.eps(),
        weights,
        CostForm::Reciprocal,
    )
    .unwrap();
    let opts = fractional::FractionalOptions {
        tol: 1e-7,
        max_cuts: 5000,
        ..Default::default()
    };
    let frac = fractional::solve_fractional_with(&recip, &opts).unwrap();
    let natural: f64 = (0..n).map(|i| inst.weights()[i] * inst.beta_hi()[i]).sum();
    natural - frac.total_cost
}

/// `bᵀM⁻¹b` through an in-place Cholesky factorization; `None` unless `M`
/// (row-major, `k × k`) is positive definite.
fn schur_term(m: &mut [f64], b: &[f64], k: usize) -> Option<f64> {
    for j in 0..k {
        let mut d = m[j * k + j];
        for p in 0..j {
            d -= m[j * k + p] * m[j * k + p];
        }
        if d <= 0.0 {
            return None;
        }
        let d = d.sqrt();
        m[j * k + j] = d;
        for i in j + 1..k {
            let mut s = m[i * k + j];
            for p in 0..j {
                s -= m[i * k + p] * m[j * k + p];
            }
            m[i * k + j] = s / d;
        }
    }
    let mut y = vec![0.0; k];
    for i in 0..k {
        let mut s = b[i];
        for p in 0..i {
            s -= m[i * k + p] * y[p];
        }
        y[i] = s / m[i * k + i];
    }
    Some(y.iter().map(|v| v * v).sum())
}

/// Grid search for reciprocal-cost fractional instances with `n >= 2`:
/// `res` points per axis on all coordinates of `γ` but one, which is set to
/// its smallest feasible value through the Schur complement (cost increases
/// with every `γ_i`). Each coordinate takes a turn as the solved one.
pub fn grid_oracle(inst: &EpidemicInstance, res: usize) -> f64 {
    let n = inst.n();
    assert!(n >= 2);
    let a = inst.graph().adjacency();
    let k: Vec<f64> = (0..n).map(|i| inst.delta()[i] - inst.eps()).collect();
    let lo: Vec<f64> = (0..n).map(|i| 1.0 / inst.beta_hi()[i]).collect();
    let hi: Vec<f64> = (0..n).map(|i| 1.0 / inst.beta_lo()[i]).collect();
    let free = n - 1;
    let mut best = f64::INFINITY;
    let mut block = vec![0.0; free * free];
    let mut full = vec![0.0; n];
    for solved in 0..n {
        let others: Vec<usize> = (0..n).filter(|&i| i != solved).collect();
        let col: Vec<f64> = others.iter().map(|&i| a[(i, solved)]).collect();
        let mut idx = vec![0usize; free];
        loop {
            for (p, &i) in others.iter().enumerate() {
                full[i] = lo[i] + (hi[i] - lo[i]) * idx[p] as f64 / (res - 1) as f64;
            }
            for (p, &i) in others.iter().enumerate() {
                for (q, &j) in others.iter().enumerate() {
                    block[p * free + q] = -a[(i, j)];
                }
                block[p * free + p] += k[i] * full[i];
            }
            if let Some(t) = schur_term(&mut block, &col, free) {
                let g = (t / k[solved]).max(lo[solved]);
                if g <= hi[solved] {
                    full[solved] = g;
                    let cost: f64 = (0..n)
                        .map(|i| inst.node_cost(i, (1.0 / full[i]).clamp(inst.beta_lo()[i], inst.beta_hi()[i])).unwrap())
                        .sum();
                    best = best.min(cost);
                }
            }
            let mut d = 0;
            while d < free {
                idx[d] += 1;
                if idx[d] < res {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == free {
                break;
            }
        }
    }
    best
}

/// Every vaccinated set that satisfies the spectral condition, as bitmasks.
pub fn feasible_sets(inst: &EpidemicInstance) -> Vec<u32> {
    let n = inst.n();
    (0..1u32 << n)
        .filter(|&mask| {
            let beta: Vec<f64> = (0..n)
                .map(|i| if mask >> i & 1 == 1 { inst.beta_lo()[i] } else { inst.beta_hi()[i] })
                .collect();
            inst.margin(&beta) >= -1e-9
        })
        .collect()
}

pub fn objective_of_mask(inst: &EpidemicInstance, mask: u32) -> f64 {
    (0..inst.n())
        .map(|i| {
            let b = if mask >> i & 1 == 1 { inst.beta_lo()[i] } else { inst.beta_hi()[i] };
            inst.weights()[i] * b
        })
        .sum()
}

/// Best `cᵀb` over all stable vaccinated sets.
pub fn exhaustive_value_of(inst: &EpidemicInstance) -> f64 {
    feasible_sets(inst)
        .into_iter()
        .map(|m| objective_of_mask(inst, m))
        .fold(f64::NEG_INFINITY, f64::max)
}
