//! Minimum-cost fractional vaccination.
//!
//! In `γ = 1/β` coordinates the spectral condition is the linear matrix
//! inequality `(D - εI)Γ - A ⪰ 0`, so the feasible set is convex. It is
//! approximated from outside by eigenvector cuts
//!
//! ```text
//!     Σ_i v_i² (δ_i - ε) γ_i ≥ vᵀ A v
//! ```
//!
//! each generated by the eigenvector `v` of the most negative eigenvalue of
//! `(D - εI)Γ - A` at the current relaxed optimum. With the reciprocal cost
//! the objective is linear in `γ`, so every relaxation is a linear program
//! whose optimum lower-bounds the true optimum. A feasible incumbent is
//! obtained by moving the relaxed point toward full vaccination just far
//! enough to restore feasibility; the loop stops when incumbent and bound
//! agree to the requested tolerance.

use minilp::{ComparisonOp, OptimizationDirection, Problem, Solution, Variable};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cost::CostForm;
use crate::error::{Error, Result};
use crate::instance::EpidemicInstance;
use crate::spectral;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const MAX_CUTS: usize = 500;
pub const MAX_CUTS_PER_ROUND: usize = 5;
const BOUNDARY_STEPS: usize = 12;
const BOUNDARY_TOL: f64 = 1e-7;

/// Margin at or above which a returned allocation counts as feasible.
pub const VERIFY_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalOptions {
    pub tol: f64,
    pub max_cuts: usize,
    pub max_cuts_per_round: usize,
}

impl Default for FractionalOptions {
    fn default() -> Self {
        FractionalOptions {
            tol: DEFAULT_TOL,
            max_cuts: MAX_CUTS,
            max_cuts_per_round: MAX_CUTS_PER_ROUND,
        }
    }
}

impl FractionalOptions {
    pub fn with_tol(tol: f64) -> Self {
        FractionalOptions {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalAllocation {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub total_cost: f64,
    /// λ_min((D − εI)Γ − A), recomputed densely.
    pub margin: f64,
    /// Number of cuts generated.
    pub cuts: usize,
    /// Certified lower bound on the optimal cost, when the objective is
    /// convex in `γ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub margin: f64,
    pub cost: f64,
    pub feasible: bool,
}

/// Outer approximation of `{γ : (D - εI)Γ - A ⪰ 0}` inside the `γ` box.
///
/// Variables are scaled as `y_i = γ_i β_hi_i ∈ [1, β_hi_i / β_lo_i]`.
struct CutPool<'a> {
    inst: &'a EpidemicInstance,
    cuts: Vec<Vec<(usize, f64)>>,
    gamma_sat: Vec<f64>,
    margin_sat: f64,
}

struct Relaxed {
    gamma: Vec<f64>,
}

impl<'a> CutPool<'a> {
    fn new(inst: &'a EpidemicInstance) -> Self {
        let gamma_sat: Vec<f64> = inst.beta_lo().iter().map(|b| 1.0 / b).collect();
        let margin_sat = inst.margin(inst.beta_lo());
        CutPool {
            inst,
            cuts: Vec::new(),
            gamma_sat,
            margin_sat,
        }
    }

    fn scale(&self, i: usize) -> f64 {
        self.inst.beta_hi()[i]
    }

    /// Minimizes `wᵀγ` over the box and current cuts.
    fn solve_relaxation(&self, w: &[f64]) -> Result<Relaxed> {
        let n = self.inst.n();
        let mut lp = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<Variable> = (0..n)
            .map(|i| {
                let hi = self.inst.beta_hi()[i] / self.inst.beta_lo()[i];
                lp.add_var(w[i] / self.scale(i), (1.0, hi))
            })
            .collect();
        for cut in &self.cuts {
            let expr: Vec<(Variable, f64)> = cut.iter().map(|&(i, c)| (vars[i], c)).collect();
            lp.add_constraint(expr.as_slice(), ComparisonOp::Ge, 1.0);
        }
        let sol = lp.solve().map_err(|e| Error::Lp(e.to_string()))?;
        Ok(self.extract(&sol, &vars))
    }

    fn extract(&self, sol: &Solution, vars: &[Variable]) -> Relaxed {
        let gamma: Vec<f64> = vars
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let hi = self.gamma_sat[i];
                let lo = 1.0 / self.inst.beta_hi()[i];
                (sol[v] / self.scale(i)).clamp(lo, hi)
            })
            .collect();
        Relaxed { gamma }
    }

    /// Adds the cut generated by unit vector `v`. Returns false when the cut
    /// would be vacuous.
    fn add_cut(&mut self, v: &[f64]) -> bool {
        let rhs = self.inst.graph().quadratic_form(v);
        if rhs <= 0.0 {
            return false;
        }
        let eps = self.inst.eps();
        let cut: Vec<(usize, f64)> = v
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != 0.0)
            .map(|(i, &x)| {
                let coeff = x * x * (self.inst.delta()[i] - eps) / self.scale(i);
                (i, coeff / rhs)
            })
            .collect();
        self.cuts.push(cut);
        true
    }

    /// Feasible point where the segment from `gamma` to full vaccination
    /// crosses the boundary. The margin is concave along the segment, so the
    /// linear interpolation of the endpoint margins lands on the feasible
    /// side; Illinois regula falsi then closes in on the crossing.
    fn boundary_point(&self, gamma: &[f64], margin: f64) -> Vec<f64> {
        let at = |t: f64| -> Vec<f64> {
            gamma
                .iter()
                .zip(&self.gamma_sat)
                .map(|(g, s)| g + t * (s - g))
                .collect()
        };
        if self.margin_sat <= 0.0 {
            return self.gamma_sat.clone();
        }
        let (mut t_lo, mut m_lo) = (0.0, margin);
        let mut t_hi = (-margin / (self.margin_sat - margin)).min(1.0);
        let mut point = at(t_hi);
        let mut m_hi = margin_at_gamma(self.inst, &point).0;
        if m_hi < 0.0 {
            return self.gamma_sat.clone();
        }
        let scale = 1.0 + margin.abs();
        let mut side = 0;
        for _ in 0..BOUNDARY_STEPS {
            if m_hi <= BOUNDARY_TOL * scale {
                break;
            }
            let t = t_lo + (t_hi - t_lo) * (-m_lo) / (m_hi - m_lo);
            let trial = at(t);
            let m = margin_at_gamma(self.inst, &trial).0;
            if m >= 0.0 {
                (t_hi, m_hi, point) = (t, m, trial);
                if side == 1 {
                    m_lo *= 0.5;
                }
                side = 1;
            } else {
                (t_lo, m_lo) = (t, m);
                if side == -1 {
                    m_hi *= 0.5;
                }
                side = -1;
            }
        }
        point
    }
}

fn margin_at_gamma(inst: &EpidemicInstance, gamma: &[f64]) -> (f64, Vec<(f64, DVector<f64>)>) {
    let mut m = -inst.graph().adjacency();
    for i in 0..inst.n() {
        m[(i, i)] = (inst.delta()[i] - inst.eps()) * gamma[i];
    }
    let (values, vectors) = spectral::symmetric_eigen(&m);
    let pairs: Vec<(f64, DVector<f64>)> = values
        .iter()
        .enumerate()
        .map(|(k, &lam)| (lam, vectors.column(k).into_owned()))
        .collect();
    (pairs.first().map_or(f64::INFINITY, |p| p.0), pairs)
}

/// Result of minimizing a linear objective `wᵀγ + offset`.
struct LinearSolve {
    gamma: Vec<f64>,
    lower_bound: f64,
}

fn minimize_linear(
    pool: &mut CutPool<'_>,
    w: &[f64],
    offset: f64,
    opts: &FractionalOptions,
) -> Result<LinearSolve> {
    let inst = pool.inst;
    let mut best: Option<(Vec<f64>, f64)> = None;
    loop {
        let relaxed = pool.solve_relaxation(w)?;
        let lower = dot(w, &relaxed.gamma) + offset;
        let (lam_min, pairs) = margin_at_gamma(inst, &relaxed.gamma);

        let incumbent = if lam_min < 0.0 {
            pool.boundary_point(&relaxed.gamma, lam_min)
        } else {
            relaxed.gamma.clone()
        };
        let upper = dot(w, &incumbent) + offset;
        if best.as_ref().map_or(true, |(_, b)| upper < *b) {
            best = Some((incumbent, upper));
        }
        let (best_gamma, best_upper) = best.clone().expect("set above");
        let gap = best_upper - lower;
        if gap <= opts.tol * (1.0 + best_upper.abs()) || lam_min >= 0.0 {
            return Ok(LinearSolve {
                gamma: if lam_min >= 0.0 { relaxed.gamma } else { best_gamma },
                lower_bound: lower,
            });
        }
        if pool.cuts.len() >= opts.max_cuts {
            return Err(Error::NotConverged {
                cuts: pool.cuts.len(),
                gap: gap / (1.0 + best_upper.abs()),
                best_gamma,
            });
        }

        // Cut on the most negative eigenvector and any eigenvectors sharing
        // its eigenvalue.
        let cluster = 1e-9 * (1.0 + lam_min.abs());
        let mut added = 0;
        for (lam, v) in &pairs {
            if *lam > lam_min + cluster || *lam >= 0.0 || added == opts.max_cuts_per_round {
                break;
            }
            if pool.add_cut(v.as_slice()) {
                added += 1;
            }
        }
        if added == 0 {
            return Err(Error::NotConverged {
                cuts: pool.cuts.len(),
                gap: gap / (1.0 + best_upper.abs()),
                best_gamma,
            });
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn solve_fractional(inst: &EpidemicInstance, tol: f64) -> Result<FractionalAllocation> {
    solve_fractional_with(inst, &FractionalOptions::with_tol(tol))
}

/// Minimum-cost fractional allocation.
///
/// Reciprocal costs are linear in `γ` and solved to certified optimality.
/// Affine costs are concave in `γ`; they are handled by successive
/// linearization from full vaccination, each step a cutting-plane solve,
/// which yields a feasible local optimum without a lower bound.
pub fn solve_fractional_with(
    inst: &EpidemicInstance,
    opts: &FractionalOptions,
) -> Result<FractionalAllocation> {
    if !(opts.tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let n = inst.n();
    let mut pool = CutPool::new(inst);
    let slopes = |gamma: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| match inst.cost_function(i) {
                Some(f) => f.gamma_slope(gamma[i]),
                None => 0.0,
            })
            .collect()
    };
    let cost_at = |gamma: &[f64]| -> f64 {
        (0..n)
            .map(|i| match inst.cost_function(i) {
                Some(f) => f.eval_unchecked((1.0 / gamma[i]).clamp(f.beta_lo(), f.beta_hi())),
                None => 0.0,
            })
            .sum()
    };

    let (gamma, lower_bound) = match inst.cost_form() {
        CostForm::Reciprocal => {
            let w = slopes(&pool.gamma_sat);
            let offset = -(0..n)
                .map(|i| w[i] / inst.beta_hi()[i])
                .sum::<f64>();
            let sol = minimize_linear(&mut pool, &w, offset, opts)?;
            (sol.gamma, Some(sol.lower_bound.max(0.0)))
        }
        CostForm::Affine => {
            let mut gamma = pool.gamma_sat.clone();
            let mut cost = cost_at(&gamma);
            loop {
                let w = slopes(&gamma);
                let offset = cost - dot(&w, &gamma);
                let sol = minimize_linear(&mut pool, &w, offset, opts)?;
                let next_cost = cost_at(&sol.gamma);
                if next_cost < cost - opts.tol * (1.0 + cost.abs()) {
                    gamma = sol.gamma;
                    cost = next_cost;
                } else {
                    if next_cost < cost {
                        gamma = sol.gamma;
                    }
                    break;
                }
            }
            (gamma, None)
        }
    };
    finish(inst, gamma, pool.cuts.len(), lower_bound)
}

/// Allocation at a given `γ`, e.g. the incumbent carried by
/// [`Error::NotConverged`].
pub fn allocation_from_gamma(
    inst: &EpidemicInstance,
    gamma: Vec<f64>,
    cuts: usize,
) -> Result<FractionalAllocation> {
    if gamma.len() != inst.n() {
        return Err(Error::Dimension {
            what: "gamma",
            expected: inst.n(),
            got: gamma.len(),
        });
    }
    finish(inst, gamma, cuts, None)
}

fn finish(
    inst: &EpidemicInstance,
    gamma: Vec<f64>,
    cuts: usize,
    lower_bound: Option<f64>,
) -> Result<FractionalAllocation> {
    let beta: Vec<f64> = (0..inst.n())
        .map(|i| (1.0 / gamma[i]).clamp(inst.beta_lo()[i], inst.beta_hi()[i]))
        .collect();
    let total_cost = inst.total_cost(&beta)?;
    let (margin, _) = margin_at_gamma(inst, &gamma);
    Ok(FractionalAllocation {
        gamma,
        beta,
        total_cost,
        margin,
        cuts,
        lower_bound,
    })
}

/// Constants `(a, b)` with `Σ f_i(β_i) = T (a·Trace(Γ) - b)` for homogeneous
/// reciprocal costs.
pub fn trace_constants(inst: &EpidemicInstance) -> (f64, f64) {
    let lo = inst.beta_lo()[0];
    let hi = inst.beta_hi()[0];
    let a = 1.0 / (1.0 / lo - 1.0 / hi);
    let b = a * inst.beta_hi().iter().map(|b| 1.0 / b).sum::<f64>();
    (a, b)
}

/// Trace minimization for homogeneous curing rates, bounds and reciprocal
/// costs. Returns the same allocation as [`solve_fractional`] with the cost
/// recovered from the trace.
pub fn solve_trace_sdp(inst: &EpidemicInstance, tol: f64) -> Result<FractionalAllocation> {
    let opts = FractionalOptions::with_tol(tol);
    let n = inst.n();
    if n == 0 {
        return finish(inst, Vec::new(), 0, Some(0.0));
    }
    let same = |xs: &[f64]| xs.iter().all(|&x| x == xs[0]);
    if inst.cost_form() != CostForm::Reciprocal {
        return Err(Error::domain("trace formulation needs reciprocal costs"));
    }
    if !same(inst.delta()) || !same(inst.beta_lo()) || !same(inst.beta_hi()) || !same(inst.weights()) {
        return Err(Error::domain(
            "trace formulation needs homogeneous curing rates, bounds and cost scale",
        ));
    }
    if inst.beta_lo()[0] == inst.beta_hi()[0] {
        return Err(Error::domain("trace formulation needs beta_lo < beta_hi"));
    }
    let mut pool = CutPool::new(inst);
    let sol = minimize_linear(&mut pool, &vec![1.0; n], 0.0, &opts)?;
    let (a, b) = trace_constants(inst);
    let t = inst.weights()[0];
    let mut alloc = finish(inst, sol.gamma, pool.cuts.len(), None)?;
    let trace: f64 = alloc.gamma.iter().sum();
    alloc.total_cost = (t * (a * trace - b)).max(0.0);
    alloc.lower_bound = Some((t * (a * sol.lower_bound - b)).max(0.0));
    Ok(alloc)
}

/// Recomputes margin and cost of a rate vector from scratch.
pub fn verify_allocation(inst: &EpidemicInstance, beta: &[f64]) -> Result<VerificationReport> {
    let cost = inst.total_cost(beta)?;
    inst.rates(beta)?;
    let margin = inst.margin(beta);
    Ok(VerificationReport {
        margin,
        cost,
        feasible: margin >= -VERIFY_SLACK,
    })
}
