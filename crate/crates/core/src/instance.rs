use crate::cost::{CostForm, CostFunction};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::spectral::{self, RateMatrices, FEASIBILITY_SLACK};

/// An allocation problem: graph, curing rates, admissible infection-rate
/// intervals, decay target and per-node cost weights.
///
/// The weight of node `i` is its maximum cost `T_i` (reciprocal form) or its
/// all-or-nothing vaccination cost `c_i` (affine form). Construction checks
/// that fully vaccinating every node satisfies the spectral condition.
#[derive(Debug, Clone)]
pub struct EpidemicInstance {
    graph: Graph,
    delta: Vec<f64>,
    beta_lo: Vec<f64>,
    beta_hi: Vec<f64>,
    eps: f64,
    weights: Vec<f64>,
    cost_form: CostForm,
}

impl EpidemicInstance {
    pub fn new(
        graph: Graph,
        delta: Vec<f64>,
        beta_lo: Vec<f64>,
        beta_hi: Vec<f64>,
        eps: f64,
        weights: Vec<f64>,
        cost_form: CostForm,
    ) -> Result<Self> {
        let n = graph.n();
        for (what, len) in [
            ("delta", delta.len()),
            ("beta_lo", beta_lo.len()),
            ("beta_hi", beta_hi.len()),
            ("weights", weights.len()),
        ] {
            if len != n {
                return Err(Error::Dimension {
                    what,
                    expected: n,
                    got: len,
                });
            }
        }
        for i in 0..n {
            if !(beta_lo[i] > 0.0 && beta_lo[i] <= beta_hi[i] && beta_hi[i].is_finite()) {
                return Err(Error::domain(format!(
                    "node {i}: need 0 < beta_lo <= beta_hi, got [{}, {}]",
                    beta_lo[i], beta_hi[i]
                )));
            }
            if !(weights[i] >= 0.0 && weights[i].is_finite()) {
                return Err(Error::domain(format!(
                    "node {i}: cost weight must be finite and nonnegative, got {}",
                    weights[i]
                )));
            }
        }
        // Positivity of delta is checked here too.
        RateMatrices::new(beta_lo.clone(), delta.clone())?;
        spectral::check_eps(&delta, eps)?;

        let inst = EpidemicInstance {
            graph,
            delta,
            beta_lo,
            beta_hi,
            eps,
            weights,
            cost_form,
        };
        let saturated = inst.margin(&inst.beta_lo);
        if saturated < -FEASIBILITY_SLACK {
            return Err(Error::Infeasible(format!(
                "even full vaccination leaves stability margin {saturated:.6e} < 0 \
                 (lambda_1(B_lo A - D) = {:.6e} > -eps = {:.6e})",
                inst.lambda_max(&inst.beta_lo),
                -inst.eps
            )));
        }
        Ok(inst)
    }

    /// Homogeneous protocol instance: equal curing rate, natural rate
    /// `beta_hi`, vaccinated rate `vaccine_effect * beta_hi`, unit weights.
    pub fn homogeneous(
        graph: Graph,
        delta: f64,
        beta_hi: f64,
        vaccine_effect: f64,
        eps: f64,
        cost_form: CostForm,
    ) -> Result<Self> {
        if !(vaccine_effect > 0.0 && vaccine_effect < 1.0) {
            return Err(Error::domain(format!(
                "vaccine effect must lie in (0, 1), got {vaccine_effect}"
            )));
        }
        let n = graph.n();
        Self::new(
            graph,
            vec![delta; n],
            vec![vaccine_effect * beta_hi; n],
            vec![beta_hi; n],
            eps,
            vec![1.0; n],
            cost_form,
        )
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn beta_lo(&self) -> &[f64] {
        &self.beta_lo
    }

    pub fn beta_hi(&self) -> &[f64] {
        &self.beta_hi
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cost_form(&self) -> CostForm {
        self.cost_form
    }

    /// Same instance with a different decay target.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(
            self.graph.clone(),
            self.delta.clone(),
            self.beta_lo.clone(),
            self.beta_hi.clone(),
            eps,
            self.weights.clone(),
            self.cost_form,
        )
    }

    /// Cost function of node `i`, or `None` when its interval is a single
    /// point (the node cannot be vaccinated and costs nothing).
    pub fn cost_function(&self, i: usize) -> Option<CostFunction> {
        (self.beta_lo[i] < self.beta_hi[i]).then(|| {
            CostFunction::new(self.cost_form, self.beta_lo[i], self.beta_hi[i], self.weights[i])
                .expect("bounds validated at construction")
        })
    }

    pub fn node_cost(&self, i: usize, beta: f64) -> Result<f64> {
        match self.cost_function(i) {
            Some(f) => f.eval(beta),
            None => Ok(0.0),
        }
    }

    pub fn total_cost(&self, betas: &[f64]) -> Result<f64> {
        self.check_len(betas)?;
        (0..self.n()).map(|i| self.node_cost(i, betas[i])).sum()
    }

    pub fn rates(&self, betas: &[f64]) -> Result<RateMatrices> {
        RateMatrices::new(betas.to_vec(), self.delta.clone())
    }

    /// λ₁(BA − D) for the given rates.
    pub fn lambda_max(&self, betas: &[f64]) -> f64 {
        spectral::largest_eigenvalue(&spectral::symmetric_spreading_matrix(
            &self.graph,
            betas,
            &self.delta,
        ))
    }

    /// λ_min((D − εI)B⁻¹ − A) for the given rates.
    pub fn margin(&self, betas: &[f64]) -> f64 {
        spectral::smallest_eigenvalue(&spectral::margin_matrix(
            &self.graph,
            betas,
            &self.delta,
            self.eps,
        ))
    }

    /// Whether λ₁(BA − D) ≤ −ε at the given rates, up to a relative slack.
    pub(crate) fn lambda_is_stable(&self, lambda: f64) -> bool {
        lambda <= -self.eps + 1e-12 * (1.0 + lambda.abs())
    }

    fn check_len(&self, betas: &[f64]) -> Result<()> {
        if betas.len() != self.n() {
            return Err(Error::Dimension {
                what: "rates",
                expected: self.n(),
                got: betas.len(),
            });
        }
        Ok(())
    }
}
