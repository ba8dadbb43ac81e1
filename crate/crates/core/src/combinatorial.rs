//! All-or-nothing vaccination: each node keeps its natural rate `β_hi` or is
//! fully vaccinated to `β_lo`. Feasible sets satisfy `λ₁(B_S A − D) ≤ −ε`;
//! among them we want to maximize `cᵀb = Σ c_i β_i`, equivalently minimize
//! the total vaccination cost `Σ_{i ∈ S} c_i`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fractional::VERIFY_SLACK;
use crate::graph::eigenvector_centrality;
use crate::instance::EpidemicInstance;
use crate::spectral;

/// Exhaustive enumeration limit.
pub const EXHAUSTIVE_MAX_NODES: usize = 16;
/// Above this size candidate scores use warm-started Lanczos instead of a
/// dense eigensolve.
pub const LANCZOS_MIN_NODES: usize = 64;
const LANCZOS_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Greedy,
    ReverseGreedy,
    Degree,
    Centrality,
    Exhaustive,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Greedy,
        Method::ReverseGreedy,
        Method::Degree,
        Method::Centrality,
        Method::Exhaustive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Greedy => "greedy",
            Method::ReverseGreedy => "reverse-greedy",
            Method::Degree => "degree",
            Method::Centrality => "centrality",
            Method::Exhaustive => "exhaustive",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::domain(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ranking {
    Degree,
    EigenvectorCentrality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteAllocation {
    pub method: Method,
    /// Vaccinated nodes, ascending.
    pub vaccinated: Vec<usize>,
    /// `cᵀb`.
    pub objective_cb: f64,
    /// `Σ_{i ∈ S} c_i`.
    pub total_cost: f64,
    /// λ_min((D − εI)B⁻¹ − A).
    pub margin: f64,
    /// Selection order (greedy, baselines) or removal order (reverse greedy).
    pub order: Vec<usize>,
    #[serde(skip)]
    pub beta: Vec<f64>,
}

impl DiscreteAllocation {
    /// Builds and verifies the allocation for vaccinated set `set`.
    pub fn from_set(
        inst: &EpidemicInstance,
        method: Method,
        set: &[usize],
        order: Vec<usize>,
    ) -> Result<Self> {
        let n = inst.n();
        let mut mask = vec![false; n];
        for &i in set {
            if i >= n {
                return Err(Error::domain(format!("node {i} out of range for n = {n}")));
            }
            mask[i] = true;
        }
        let beta = rates_for(inst, &mask);
        let vaccinated: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        let objective_cb = objective(inst, &beta);
        let total_cost = vaccinated.iter().map(|&i| inst.weights()[i]).sum();
        let margin = inst.margin(&beta);
        Ok(DiscreteAllocation {
            method,
            vaccinated,
            objective_cb,
            total_cost,
            margin,
            order,
            beta,
        })
    }

    pub fn is_feasible(&self) -> bool {
        self.margin >= -VERIFY_SLACK
    }

    /// Restores the rate vector after deserialization.
    pub fn rebuild(&mut self, inst: &EpidemicInstance) -> Result<()> {
        let fresh = Self::from_set(inst, self.method, &self.vaccinated, self.order.clone())?;
        self.beta = fresh.beta;
        Ok(())
    }

    fn verified(self) -> Result<Self> {
        if !self.is_feasible() {
            return Err(Error::domain(format!(
                "{} allocation failed independent verification (margin {:e})",
                self.method, self.margin
            )));
        }
        Ok(self)
    }
}

fn rates_for(inst: &EpidemicInstance, vaccinated: &[bool]) -> Vec<f64> {
    (0..inst.n())
        .map(|i| {
            if vaccinated[i] {
                inst.beta_lo()[i]
            } else {
                inst.beta_hi()[i]
            }
        })
        .collect()
}

fn objective(inst: &EpidemicInstance, beta: &[f64]) -> f64 {
    inst.weights().iter().zip(beta).map(|(c, b)| c * b).sum()
}

/// Scores λ₁(B_S A − D) for a base set and single-node modifications of it.
struct Spreading<'a> {
    inst: &'a EpidemicInstance,
    sqrt_beta: Vec<f64>,
    lambda: f64,
    top: Vec<f64>,
    scratch: Vec<f64>,
    scaled: Vec<f64>,
}

impl<'a> Spreading<'a> {
    fn new(inst: &'a EpidemicInstance, beta: &[f64]) -> Self {
        let n = inst.n();
        let mut s = Spreading {
            inst,
            sqrt_beta: Vec::new(),
            lambda: 0.0,
            top: Vec::new(),
            scratch: vec![0.0; n],
            scaled: vec![0.0; n],
        };
        s.reset(beta);
        s
    }

    fn reset(&mut self, beta: &[f64]) {
        self.sqrt_beta = beta.iter().map(|b| b.sqrt()).collect();
        let m = spectral::symmetric_spreading_matrix(self.inst.graph(), beta, self.inst.delta());
        let (lambda, top) = top_eigenpair(m);
        self.lambda = lambda;
        self.top = top;
    }

    /// λ₁ with node `i` moved to rate `beta_i`.
    fn with_node(&mut self, i: usize, beta_i: f64) -> f64 {
        let n = self.inst.n();
        let old = self.sqrt_beta[i];
        self.sqrt_beta[i] = beta_i.sqrt();
        let lam = if n < LANCZOS_MIN_NODES {
            let beta: Vec<f64> = self.sqrt_beta.iter().map(|s| s * s).collect();
            spectral::largest_eigenvalue(&spectral::symmetric_spreading_matrix(
                self.inst.graph(),
                &beta,
                self.inst.delta(),
            ))
        } else {
            let g = self.inst.graph();
            let delta = self.inst.delta();
            let sb = &self.sqrt_beta;
            let scratch = &mut self.scratch;
            let scaled = &mut self.scaled;
            spectral::lanczos_largest(
                n,
                |x, y| {
                    for k in 0..n {
                        scaled[k] = sb[k] * x[k];
                    }
                    g.adjacency_mul(scaled, scratch);
                    for k in 0..n {
                        y[k] = sb[k] * scratch[k] - delta[k] * x[k];
                    }
                },
                &self.top,
                LANCZOS_TOL,
            )
        };
        self.sqrt_beta[i] = old;
        lam
    }
}

fn top_eigenpair(m: DMatrix<f64>) -> (f64, Vec<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (f64::NEG_INFINITY, Vec::new());
    }
    let (values, vectors) = spectral::symmetric_eigen(&m);
    (values[n - 1], vectors.column(n - 1).iter().copied().collect())
}

/// Eigenvalue drop per unit cost. Free nodes that still help score `+∞`.
fn benefit(drop: f64, cost: f64) -> f64 {
    if cost > 0.0 {
        drop / cost
    } else if drop > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// `a` beats `b` by more than rounding noise.
fn clearly_greater(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a > b;
    }
    a > b + 1e-10 * a.abs().max(b.abs()) + 1e-15
}

/// Δ(i, S) = [λ₁(B_S A − D) − λ₁(B_{S+i} A − D)] / c_i, both eigenvalues
/// recomputed densely.
pub fn marginal_benefit(i: usize, set: &[usize], inst: &EpidemicInstance) -> Result<f64> {
    let n = inst.n();
    if i >= n {
        return Err(Error::domain(format!("node {i} out of range for n = {n}")));
    }
    if set.contains(&i) {
        return Err(Error::domain(format!("node {i} is already vaccinated")));
    }
    let c = inst.weights()[i];
    if !(c > 0.0) {
        return Err(Error::domain(format!("node {i} has nonpositive cost {c}")));
    }
    let mut mask = vec![false; n];
    for &j in set {
        if j >= n {
            return Err(Error::domain(format!("node {j} out of range for n = {n}")));
        }
        mask[j] = true;
    }
    let before = inst.lambda_max(&rates_for(inst, &mask));
    mask[i] = true;
    let after = inst.lambda_max(&rates_for(inst, &mask));
    Ok((before - after) / c)
}

/// Forward greedy: starting from no vaccinations, repeatedly vaccinate the
/// node with the largest eigenvalue drop per unit cost until stable.
pub fn greedy_forward(inst: &EpidemicInstance) -> Result<DiscreteAllocation> {
    let n = inst.n();
    let mut mask = vec![false; n];
    let mut order = Vec::new();
    let mut spread = Spreading::new(inst, inst.beta_hi());
    while !inst.lambda_is_stable(spread.lambda) && order.len() < n {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !mask[i]) {
            let lam = spread.with_node(i, inst.beta_lo()[i]);
            let score = benefit(spread.lambda - lam, inst.weights()[i]);
            if best.map_or(true, |(_, b)| clearly_greater(score, b)) {
                best = Some((i, score));
            }
        }
        let (pick, _) = best.expect("unvaccinated node remains");
        mask[pick] = true;
        order.push(pick);
        spread.reset(&rates_for(inst, &mask));
    }
    DiscreteAllocation::from_set(inst, Method::Greedy, &order, order.clone())?.verified()
}

/// Reverse greedy: start fully vaccinated and repeatedly un-vaccinate the
/// node whose removal raises the eigenvalue least per unit cost, stopping
/// before the first removal that breaks stability.
pub fn greedy_reverse(inst: &EpidemicInstance) -> Result<DiscreteAllocation> {
    let n = inst.n();
    let mut mask = vec![true; n];
    let mut removed = Vec::new();
    let mut spread = Spreading::new(inst, inst.beta_lo());
    while removed.len() < n {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in (0..n).filter(|&j| mask[j]) {
            let lam = spread.with_node(j, inst.beta_hi()[j]);
            let score = benefit(lam - spread.lambda, inst.weights()[j]);
            if best.map_or(true, |(_, b, _)| clearly_greater(b, score)) {
                best = Some((j, score, lam));
            }
        }
        let (pick, _, lam) = best.expect("vaccinated node remains");
        if !inst.lambda_is_stable(lam) {
            break;
        }
        mask[pick] = false;
        removed.push(pick);
        spread.reset(&rates_for(inst, &mask));
        // The warm-started estimate must agree with the fresh dense value.
        if !inst.lambda_is_stable(spread.lambda) {
            mask[pick] = true;
            removed.pop();
            break;
        }
    }
    let set: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    DiscreteAllocation::from_set(inst, Method::ReverseGreedy, &set, removed)?.verified()
}

/// Vaccinates nodes in decreasing score order (ties: lowest index) and
/// returns the shortest stabilizing prefix.
pub fn threshold_baseline(inst: &EpidemicInstance, ranking: Ranking) -> Result<DiscreteAllocation> {
    let n = inst.n();
    let (method, scores): (Method, Vec<f64>) = match ranking {
        Ranking::Degree => (
            Method::Degree,
            inst.graph().degrees().into_iter().map(|d| d as f64).collect(),
        ),
        Ranking::EigenvectorCentrality => {
            let c = if inst.graph().m() == 0 {
                vec![0.0; n]
            } else {
                eigenvector_centrality(inst.graph(), 1e-10)?
            };
            // Quantize so symmetric nodes tie exactly.
            (Method::Centrality, c.into_iter().map(|x| (x * 1e9).round()).collect())
        }
    };
    let mut rank: Vec<usize> = (0..n).collect();
    rank.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let stable_prefix = |k: usize| {
        let mut mask = vec![false; n];
        for &i in &rank[..k] {
            mask[i] = true;
        }
        inst.lambda_is_stable(inst.lambda_max(&rates_for(inst, &mask)))
    };
    // Stability is monotone in the prefix length, so bisect.
    let (mut lo, mut hi) = (0, n);
    if stable_prefix(0) {
        hi = 0;
    } else {
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if stable_prefix(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let prefix = rank[..hi].to_vec();
    DiscreteAllocation::from_set(inst, method, &prefix, prefix.clone())?.verified()
}

/// Best feasible set by enumeration; `n ≤ 16`.
pub fn exhaustive_optimum(inst: &EpidemicInstance) -> Result<DiscreteAllocation> {
    let n = inst.n();
    if n > EXHAUSTIVE_MAX_NODES {
        return Err(Error::TooLarge {
            what: "exhaustive enumeration",
            n,
            limit: EXHAUSTIVE_MAX_NODES,
        });
    }
    let mut subsets: Vec<(f64, u32)> = (0..(1u32 << n))
        .map(|mask| {
            let cb: f64 = (0..n)
                .map(|i| {
                    let b = if mask & (1 << i) != 0 {
                        inst.beta_lo()[i]
                    } else {
                        inst.beta_hi()[i]
                    };
                    inst.weights()[i] * b
                })
                .sum();
            (cb, mask)
        })
        .collect();
    // Highest objective first; the first stable subset is optimal.
    subsets.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, mask) in subsets {
        let vacc: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
        if inst.lambda_is_stable(inst.lambda_max(&rates_for(inst, &vacc))) {
            let set: Vec<usize> = (0..n).filter(|&i| vacc[i]).collect();
            return DiscreteAllocation::from_set(inst, Method::Exhaustive, &set, set.clone())?
                .verified();
        }
    }
    Err(Error::Infeasible("no stable vaccination set".into()))
}

/// Runs one method by tag.
pub fn run_method(inst: &EpidemicInstance, method: Method) -> Result<DiscreteAllocation> {
    match method {
        Method::Greedy => greedy_forward(inst),
        Method::ReverseGreedy => greedy_reverse(inst),
        Method::Degree => threshold_baseline(inst, Ranking::Degree),
        Method::Centrality => threshold_baseline(inst, Ranking::EigenvectorCentrality),
        Method::Exhaustive => exhaustive_optimum(inst),
    }
}
