//! Lagrangian upper bound for all-or-nothing vaccination.
//!
//! For any `Z ⪰ 0` the value
//!
//! ```text
//!     q(Z) = Σ_i u_i − trace(A Z),
//!     u_i  = max(c_i β_hi_i + (δ_i − ε) Z_ii / β_hi_i,
//!                c_i β_lo_i + (δ_i − ε) Z_ii / β_lo_i)
//! ```
//!
//! bounds the best achievable `cᵀb` from above. The bound is tightened by
//! projected subgradient descent over the PSD cone; since every iterate is
//! itself a valid bound, the smallest value seen is reported.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::combinatorial::DiscreteAllocation;
use crate::error::{Error, Result};
use crate::instance::EpidemicInstance;
use crate::spectral;

pub const DEFAULT_ITERS: usize = 2000;
/// Relative slack on `Z_ii` around the threshold within which a node is
/// left undetermined.
pub const DEFAULT_FIXING_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixing {
    /// Node keeps its natural rate.
    ForceHi,
    /// Node is vaccinated.
    ForceLo,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualOptions {
    pub iters: usize,
    /// Initial step; `None` selects `1ᵀu(Z₀) / (n ‖A‖_F)`.
    pub step0: Option<f64>,
    /// Start from the diagonal of per-node thresholds instead of `Z = 0`.
    pub warm_start: bool,
    pub fixing_slack: f64,
}

impl Default for DualOptions {
    fn default() -> Self {
        DualOptions {
            iters: DEFAULT_ITERS,
            step0: None,
            warm_start: false,
            fixing_slack: DEFAULT_FIXING_SLACK,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate {
    pub z: DMatrix<f64>,
    pub u: Vec<f64>,
    /// Best upper bound found.
    pub value: f64,
    pub eps: f64,
    pub iterations: usize,
    pub fixings: Vec<Fixing>,
    /// `value − cᵀb` for an attached allocation.
    pub gap: Option<f64>,
}

/// Serialized form of a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub value: f64,
    pub gap: Option<f64>,
    pub iterations: usize,
    pub eps: f64,
    pub fixings: BTreeMap<String, Fixing>,
}

impl DualCertificate {
    pub fn record(&self) -> CertificateRecord {
        CertificateRecord {
            value: self.value,
            gap: self.gap,
            iterations: self.iterations,
            eps: self.eps,
            fixings: self
                .fixings
                .iter()
                .enumerate()
                .map(|(i, f)| (i.to_string(), *f))
                .collect(),
        }
    }

    pub fn with_gap(mut self, alloc: &DiscreteAllocation) -> Self {
        self.gap = Some(certificate_gap(alloc, &self));
        self
    }
}

/// Per-node threshold `c_i β_hi_i β_lo_i / (δ_i − ε)` where both branches of
/// `u_i` coincide.
pub fn thresholds(inst: &EpidemicInstance) -> Vec<f64> {
    (0..inst.n())
        .map(|i| {
            inst.weights()[i] * inst.beta_hi()[i] * inst.beta_lo()[i]
                / (inst.delta()[i] - inst.eps())
        })
        .collect()
}

/// `(value, u)` and, per node, whether the `β_lo` branch is strictly larger.
fn evaluate(z: &DMatrix<f64>, inst: &EpidemicInstance) -> (f64, Vec<f64>, Vec<bool>) {
    let n = inst.n();
    let mut u = Vec::with_capacity(n);
    let mut lo_branch = Vec::with_capacity(n);
    for i in 0..n {
        let c = inst.weights()[i];
        let k = inst.delta()[i] - inst.eps();
        let (hi, lo) = (inst.beta_hi()[i], inst.beta_lo()[i]);
        let zi = z[(i, i)];
        let branch_hi = c * hi + k / hi * zi;
        let branch_lo = c * lo + k / lo * zi;
        // Ties take the natural-rate branch.
        if branch_lo > branch_hi {
            u.push(branch_lo);
            lo_branch.push(true);
        } else {
            u.push(branch_hi);
            lo_branch.push(false);
        }
    }
    let trace_az = 2.0
        * inst
            .graph()
            .edges()
            .iter()
            .map(|&(a, b)| z[(a, b)])
            .sum::<f64>();
    (u.iter().sum::<f64>() - trace_az, u, lo_branch)
}

/// Dual objective at `Z` with the epigraph variables set to the per-node
/// maximum.
pub fn dual_value(z: &DMatrix<f64>, inst: &EpidemicInstance) -> Result<(f64, Vec<f64>)> {
    let n = inst.n();
    if z.nrows() != n || z.ncols() != n {
        return Err(Error::Dimension {
            what: "Z",
            expected: n,
            got: z.nrows(),
        });
    }
    let scale = z.abs().max().max(f64::MIN_POSITIVE);
    if (z - z.transpose()).abs().max() > 1e-12 * scale {
        return Err(Error::domain("Z is not symmetric"));
    }
    if n > 0 {
        let min_eig = spectral::smallest_eigenvalue(z);
        if min_eig < -1e-9 * scale {
            return Err(Error::domain(format!(
                "Z is not positive semidefinite (smallest eigenvalue {min_eig:e})"
            )));
        }
    }
    let (value, u, _) = evaluate(z, inst);
    Ok((value, u))
}

/// Projected subgradient descent on the dual, keeping the best iterate.
pub fn solve_dual(inst: &EpidemicInstance, opts: &DualOptions) -> Result<DualCertificate> {
    if opts.iters == 0 {
        return Err(Error::domain("need at least one iteration"));
    }
    let n = inst.n();
    let thresh = thresholds(inst);
    let mut z = if opts.warm_start {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&thresh))
    } else {
        DMatrix::zeros(n, n)
    };
    let (v0, u0, _) = evaluate(&z, inst);
    let a_frob = (2.0 * inst.graph().m() as f64).sqrt();
    let step0 = match opts.step0 {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::domain(format!("step must be positive, got {s}"))),
        None if n > 0 && a_frob > 0.0 => u0.iter().sum::<f64>() / (n as f64 * a_frob),
        None => 0.0,
    };

    let mut best = (v0, z.clone(), u0);
    let adjacency = inst.graph().adjacency();
    for k in 1..opts.iters {
        if step0 == 0.0 {
            break;
        }
        let (_, _, lo_branch) = evaluate(&z, inst);
        // Subgradient: diag((δ_i − ε)/β*_i) − A.
        let mut step = -&adjacency;
        for i in 0..n {
            let b = if lo_branch[i] {
                inst.beta_lo()[i]
            } else {
                inst.beta_hi()[i]
            };
            step[(i, i)] = (inst.delta()[i] - inst.eps()) / b;
        }
        let alpha = step0 / (k as f64).sqrt();
        z = spectral::project_symmetric(&(&z - step * alpha));
        let (value, u, _) = evaluate(&z, inst);
        if value < best.0 {
            best = (value, z.clone(), u);
        }
    }

    let (value, z, u) = best;
    let mut cert = DualCertificate {
        z,
        u,
        value,
        eps: inst.eps(),
        iterations: opts.iters,
        fixings: Vec::new(),
        gap: None,
    };
    cert.fixings = threshold_fixings(&cert, inst, opts.fixing_slack);
    Ok(cert)
}

/// Labels node `i` by where `Z_ii` sits relative to its threshold, with a
/// relative dead band of width `slack`.
pub fn threshold_fixings(cert: &DualCertificate, inst: &EpidemicInstance, slack: f64) -> Vec<Fixing> {
    thresholds(inst)
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let zi = cert.z[(i, i)];
            let band = slack * t;
            if zi < t - band {
                Fixing::ForceHi
            } else if zi > t + band {
                Fixing::ForceLo
            } else {
                Fixing::Undetermined
            }
        })
        .collect()
}

/// `D − cᵀb`; nonnegative for any feasible allocation.
pub fn certificate_gap(alloc: &DiscreteAllocation, cert: &DualCertificate) -> f64 {
    cert.value - alloc.objective_cb
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostForm;
    use crate::graph::Graph;
    use crate::spectral::critical_beta;

    fn inst(multiplier: f64) -> EpidemicInstance {
        let g = Graph::barabasi_albert(10, 2, 7).unwrap();
        let bc = critical_beta(&g, 0.1).unwrap();
        EpidemicInstance::homogeneous(g, 0.1, multiplier * bc, 0.2, 0.0, CostForm::Affine).unwrap()
    }

    #[test]
    fn zero_matrix_gives_natural_objective() {
        let inst = inst(1.8);
        let (value, u) = dual_value(&DMatrix::zeros(10, 10), &inst).unwrap();
        let expected: f64 = inst.beta_hi().iter().sum();
        assert!((value - expected).abs() < 1e-15);
        assert!(u.iter().zip(inst.beta_hi()).all(|(a, b)| a == b));
    }

    #[test]
    fn branches_meet_at_threshold() {
        let inst = inst(1.8);
        let t = thresholds(&inst);
        let z = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(t.clone()));
        for i in 0..10 {
            let k = inst.delta()[i] - inst.eps();
            let hi = inst.beta_hi()[i] + k / inst.beta_hi()[i] * z[(i, i)];
            let lo = inst.beta_lo()[i] + k / inst.beta_lo()[i] * z[(i, i)];
            assert!((hi - lo).abs() < 1e-12);
        }
        let cert = DualCertificate {
            z,
            u: Vec::new(),
            value: 0.0,
            eps: 0.0,
            iterations: 0,
            fixings: Vec::new(),
            gap: None,
        };
        assert!(threshold_fixings(&cert, &inst, 1e-6)
            .iter()
            .all(|f| *f == Fixing::Undetermined));
    }

    #[test]
    fn zero_diagonal_forces_natural_rate() {
        let inst = inst(1.8);
        let cert = solve_dual(&inst, &DualOptions { iters: 1, ..Default::default() }).unwrap();
        assert!(cert.fixings.iter().all(|f| *f == Fixing::ForceHi));
    }

    #[test]
    fn single_iteration_is_the_trivial_bound() {
        let inst = inst(2.4);
        let cert = solve_dual(&inst, &DualOptions { iters: 1, ..Default::default() }).unwrap();
        let expected: f64 = inst.beta_hi().iter().sum();
        assert!((cert.value - expected).abs() < 1e-15);
    }

    #[test]
    fn rejects_indefinite_z() {
        let inst = inst(1.2);
        let mut z = DMatrix::zeros(10, 10);
        z[(0, 0)] = -1.0;
        assert!(dual_value(&z, &inst).is_err());
        assert!(dual_value(&DMatrix::zeros(3, 3), &inst).is_err());
    }

    #[test]
    fn record_keys_are_node_indices() {
        let inst = inst(1.2);
        let cert = solve_dual(&inst, &DualOptions { iters: 5, ..Default::default() }).unwrap();
        let rec = cert.record();
        assert_eq!(rec.fixings.len(), 10);
        assert!(rec.fixings.contains_key("9"));
    }
}
