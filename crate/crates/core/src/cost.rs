//! Vaccination cost functions on the infection-rate interval `[β_lo, β_hi]`.
//!
//! Both forms vanish at the natural rate `β_hi`, peak at `β_lo` and decrease
//! in between. The reciprocal form is affine in `γ = 1/β`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostForm {
    /// `T (1/β - 1/β_hi) / (1/β_lo - 1/β_hi)`
    Reciprocal,
    /// `c (β - β_hi) / (β_lo - β_hi)`
    Affine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostFunction {
    beta_lo: f64,
    beta_hi: f64,
    t_max: f64,
    form: CostForm,
}

/// Relative tolerance for rates sitting on the interval ends.
const BOUND_SLACK: f64 = 1e-12;

impl CostFunction {
    pub fn new(form: CostForm, beta_lo: f64, beta_hi: f64, t_max: f64) -> Result<Self> {
        if !(beta_lo > 0.0) || !beta_hi.is_finite() {
            return Err(Error::domain(format!(
                "cost bounds need 0 < beta_lo, got beta_lo = {beta_lo}"
            )));
        }
        if !(beta_lo < beta_hi) {
            return Err(Error::domain(format!(
                "cost bounds need beta_lo < beta_hi, got [{beta_lo}, {beta_hi}]"
            )));
        }
        if !(t_max >= 0.0) || !t_max.is_finite() {
            return Err(Error::domain(format!(
                "maximum cost must be finite and nonnegative, got {t_max}"
            )));
        }
        Ok(CostFunction {
            beta_lo,
            beta_hi,
            t_max,
            form,
        })
    }

    pub fn reciprocal(beta_lo: f64, beta_hi: f64, t_max: f64) -> Result<Self> {
        Self::new(CostForm::Reciprocal, beta_lo, beta_hi, t_max)
    }

    pub fn affine(beta_lo: f64, beta_hi: f64, c: f64) -> Result<Self> {
        Self::new(CostForm::Affine, beta_lo, beta_hi, c)
    }

    pub fn beta_lo(&self) -> f64 {
        self.beta_lo
    }

    pub fn beta_hi(&self) -> f64 {
        self.beta_hi
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn form(&self) -> CostForm {
        self.form
    }

    /// Cost of holding the node at rate `beta`.
    pub fn eval(&self, beta: f64) -> Result<f64> {
        let width = self.beta_hi - self.beta_lo;
        let slack = BOUND_SLACK * self.beta_hi;
        if !(beta >= self.beta_lo - slack && beta <= self.beta_hi + slack) {
            return Err(Error::domain(format!(
                "rate {beta} outside [{}, {}]",
                self.beta_lo, self.beta_hi
            )));
        }
        debug_assert!(width > 0.0);
        Ok(self.eval_unchecked(beta.clamp(self.beta_lo, self.beta_hi)))
    }

    pub(crate) fn eval_unchecked(&self, beta: f64) -> f64 {
        if beta == self.beta_hi {
            return 0.0;
        }
        if beta == self.beta_lo {
            return self.t_max;
        }
        match self.form {
            CostForm::Reciprocal => {
                self.t_max * (1.0 / beta - 1.0 / self.beta_hi)
                    / (1.0 / self.beta_lo - 1.0 / self.beta_hi)
            }
            CostForm::Affine => {
                self.t_max * (beta - self.beta_hi) / (self.beta_lo - self.beta_hi)
            }
        }
    }

    /// Cost as a function of `γ = 1/β`.
    pub fn eval_gamma(&self, gamma: f64) -> Result<f64> {
        self.eval(1.0 / gamma)
    }

    /// Derivative of `γ ↦ f(1/γ)`.
    pub(crate) fn gamma_slope(&self, gamma: f64) -> f64 {
        match self.form {
            CostForm::Reciprocal => self.t_max / (1.0 / self.beta_lo - 1.0 / self.beta_hi),
            CostForm::Affine => {
                self.t_max / (gamma * gamma * (self.beta_hi - self.beta_lo))
            }
        }
    }

    /// Finite-difference check of `f''(β) ≥ -(2/β) f'(β)` on a uniform grid.
    ///
    /// The residual `f'' + (2/β) f'` is normalized by `|f''| + |2f'/β|` so
    /// the verdict does not depend on the units of `β` or the cost scale.
    pub fn check_assumption1(&self, grid_points: usize) -> Result<Assumption1Check> {
        if grid_points < 8 {
            return Err(Error::domain(format!(
                "need at least 8 grid points, got {grid_points}"
            )));
        }
        let h = (self.beta_hi - self.beta_lo) / 1e4;
        let lo = self.beta_lo + h;
        let hi = self.beta_hi - h;
        let f = |b: f64| self.eval_unchecked(b);
        let mut worst = Assumption1Check {
            holds: true,
            worst_violation: 0.0,
            worst_beta: lo,
        };
        let mut worst_residual = f64::INFINITY;
        for k in 0..grid_points {
            let beta = lo + (hi - lo) * k as f64 / (grid_points - 1) as f64;
            let (fm, f0, fp) = (f(beta - h), f(beta), f(beta + h));
            let d1 = (fp - fm) / (2.0 * h);
            let d2 = (fp - 2.0 * f0 + fm) / (h * h);
            let lhs = d2;
            let rhs = -2.0 / beta * d1;
            let scale = lhs.abs() + rhs.abs();
            let residual = if scale == 0.0 { 0.0 } else { (lhs - rhs) / scale };
            if residual < worst_residual {
                worst_residual = residual;
                worst.worst_beta = beta;
            }
        }
        worst.worst_violation = (-worst_residual).max(0.0);
        worst.holds = worst.worst_violation <= ASSUMPTION1_TOL;
        Ok(worst)
    }
}

pub const ASSUMPTION1_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assumption1Check {
    pub holds: bool,
    /// Largest normalized shortfall of `f''` below `-(2/β) f'`; 0 if none.
    pub worst_violation: f64,
    pub worst_beta: f64,
}

/// Sum of per-node costs.
pub fn total_cost(fs: &[CostFunction], betas: &[f64]) -> Result<f64> {
    if fs.len() != betas.len() {
        return Err(Error::Dimension {
            what: "rates",
            expected: fs.len(),
            got: betas.len(),
        });
    }
    fs.iter().zip(betas).map(|(f, &b)| f.eval(b)).sum()
}
