//! Symmetric eigenvalue kernels for the spreading matrix `BA - D`.
//!
//! `BA - D` is similar to the symmetric `B^{1/2} A B^{1/2} - D`, so every
//! quantity here is computed from a symmetric matrix: densely for
//! `n <= DENSE_EIGEN_LIMIT`, by shifted power iteration above that.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::Graph;

pub const DENSE_EIGEN_LIMIT: usize = 512;
pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITERS: usize = 10_000;

/// Slack on the stability margin below which an allocation is still called
/// stable.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

/// Per-node infection rates `β` and curing rates `δ`, all strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrices {
    beta: Vec<f64>,
    delta: Vec<f64>,
}

impl RateMatrices {
    pub fn new(beta: Vec<f64>, delta: Vec<f64>) -> Result<Self> {
        if beta.len() != delta.len() {
            return Err(Error::Dimension {
                what: "delta",
                expected: beta.len(),
                got: delta.len(),
            });
        }
        if let Some(i) = beta.iter().position(|&b| !(b > 0.0) || !b.is_finite()) {
            return Err(Error::domain(format!(
                "infection rate at node {i} must be positive, got {}",
                beta[i]
            )));
        }
        if let Some(i) = delta.iter().position(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::domain(format!(
                "curing rate at node {i} must be positive, got {}",
                delta[i]
            )));
        }
        Ok(RateMatrices { beta, delta })
    }

    pub fn homogeneous(n: usize, beta: f64, delta: f64) -> Result<Self> {
        Self::new(vec![beta; n], vec![delta; n])
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    fn check_graph(&self, g: &Graph) -> Result<()> {
        if self.len() != g.n() {
            return Err(Error::Dimension {
                what: "rate vector",
                expected: g.n(),
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// `B^{1/2} A B^{1/2} - D`.
pub fn symmetric_spreading_matrix(g: &Graph, beta: &[f64], delta: &[f64]) -> DMatrix<f64> {
    let n = g.n();
    let sqrt_b: Vec<f64> = beta.iter().map(|b| b.sqrt()).collect();
    let mut m = DMatrix::zeros(n, n);
    for &(u, v) in g.edges() {
        let w = sqrt_b[u] * sqrt_b[v];
        m[(u, v)] = w;
        m[(v, u)] = w;
    }
    for i in 0..n {
        m[(i, i)] = -delta[i];
    }
    m
}

/// `(D - εI) B^{-1} - A`.
pub fn margin_matrix(g: &Graph, beta: &[f64], delta: &[f64], eps: f64) -> DMatrix<f64> {
    let mut m = -g.adjacency();
    for i in 0..g.n() {
        m[(i, i)] = (delta[i] - eps) / beta[i];
    }
    m
}

/// Eigenvalues of a symmetric matrix in ascending order with matching unit
/// eigenvectors as columns. Only the lower triangle is read.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let eig = fm
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("symmetric eigensolver failed to converge");
    let (s, u) = (eig.S(), eig.U());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let values = order.iter().map(|&k| s[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, c| u[(i, order[c])]);
    (values, vectors)
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let mut values = fm
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .expect("symmetric eigensolver failed to converge");
    values.sort_by(f64::total_cmp);
    values
}

/// Algebraically largest eigenvalue of a symmetric matrix.
pub fn largest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return f64::NEG_INFINITY;
    }
    if n <= DENSE_EIGEN_LIMIT {
        *symmetric_eigenvalues(m).last().expect("n > 0")
    } else {
        let shift = gershgorin_shift(m);
        let (rq, _) = power_iteration(
            n,
            |x, y| {
                let xv = DVector::from_column_slice(x);
                let mv = m * &xv;
                for i in 0..n {
                    y[i] = mv[i] + shift * x[i];
                }
            },
            POWER_TOL,
            POWER_MAX_ITERS,
        );
        rq - shift
    }
}

/// Algebraically smallest eigenvalue of a symmetric matrix.
pub fn smallest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    -largest_eigenvalue(&(-m))
}

/// Shift `s` making `M + sI` positive semidefinite (Gershgorin).
fn gershgorin_shift(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| {
            let off: f64 = (0..m.ncols())
                .filter(|&j| j != i)
                .map(|j| m[(i, j)].abs())
                .sum();
            off - m[(i, i)]
        })
        .fold(0.0_f64, f64::max)
}

/// Deterministic power iteration from the normalized all-ones vector.
///
/// Stops when the Rayleigh quotient changes by at most `tol` (relative to
/// its magnitude, floored at 1). Returns the final Rayleigh quotient and
/// the unit iterate. The caller's operator must have its wanted eigenvalue
/// dominant in magnitude.
pub fn power_iteration<F>(n: usize, mut apply: F, tol: f64, max_iters: usize) -> (f64, Vec<f64>)
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut y = vec![0.0; n];
    let mut rq_prev = f64::NAN;
    let mut rq = 0.0;
    for _ in 0..max_iters {
        apply(&x, &mut y);
        rq = dot(&x, &y);
        let norm = dot(&y, &y).sqrt();
        if norm == 0.0 {
            break;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
        if (rq - rq_prev).abs() <= tol * rq.abs().max(1.0) {
            break;
        }
        rq_prev = rq;
    }
    (rq, x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// λ₁(BA - D), via the symmetric similar matrix.
pub fn lambda_max_effective(g: &Graph, r: &RateMatrices) -> Result<f64> {
    r.check_graph(g)?;
    Ok(largest_eigenvalue(&symmetric_spreading_matrix(
        g,
        r.beta(),
        r.delta(),
    )))
}

/// λ_min((D - εI)B⁻¹ - A). Nonnegative exactly when λ₁(BA - D) ≤ -ε.
pub fn stability_margin(g: &Graph, r: &RateMatrices, eps: f64) -> Result<f64> {
    r.check_graph(g)?;
    check_eps(r.delta(), eps)?;
    Ok(smallest_eigenvalue(&margin_matrix(
        g,
        r.beta(),
        r.delta(),
        eps,
    )))
}

/// Rejects decay targets that reach any curing rate.
pub fn check_eps(delta: &[f64], eps: f64) -> Result<()> {
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::domain(format!(
            "decay target must be finite and nonnegative, got {eps}"
        )));
    }
    if let Some(i) = delta.iter().position(|&d| eps >= d) {
        return Err(Error::domain(format!(
            "decay target {eps} must be below every curing rate; node {i} has δ = {}",
            delta[i]
        )));
    }
    Ok(())
}

/// Homogeneous epidemic threshold δ / λ₁(A).
pub fn critical_beta(g: &Graph, delta: f64) -> Result<f64> {
    if g.m() == 0 {
        return Err(Error::domain("critical rate needs at least one edge"));
    }
    if !(delta > 0.0) {
        return Err(Error::domain(format!(
            "curing rate must be positive, got {delta}"
        )));
    }
    Ok(delta / g.spectral_radius())
}

/// Nearest positive semidefinite matrix in Frobenius norm.
pub fn psd_project(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::domain("PSD projection needs a square matrix"));
    }
    let asym = (m - m.transpose()).abs().max();
    if asym > 1e-12 * m.abs().max().max(1.0) {
        return Err(Error::domain(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(project_symmetric(m))
}

pub(crate) fn project_symmetric(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let (values, mut q) = symmetric_eigen(&sym);
    for (k, &lam) in values.iter().enumerate() {
        let scale = lam.max(0.0).sqrt();
        q.column_mut(k).scale_mut(scale);
    }
    &q * q.transpose()
}

/// Largest eigenvalue of a symmetric operator by Lanczos with full
/// reorthogonalization, started from `start`.
///
/// Used to rescore many small perturbations of one matrix: started from the
/// unperturbed top eigenvector it converges in a handful of steps. Stops
/// when the Ritz residual falls below `tol` times the operator scale or the
/// Krylov space is exhausted, in which case the value is exact.
pub fn lanczos_largest<F>(n: usize, mut apply: F, start: &[f64], tol: f64) -> f64
where
    F: FnMut(&[f64], &mut [f64]),
{
    let norm0 = dot(start, start).sqrt();
    let mut q: Vec<f64> = if norm0 > 0.0 {
        start.iter().map(|x| x / norm0).collect()
    } else {
        vec![1.0 / (n as f64).sqrt(); n]
    };
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut scale: f64 = 0.0;
    let mut theta = f64::NEG_INFINITY;

    for k in 0..n {
        apply(&q, &mut w);
        let alpha = dot(&q, &w);
        for (wi, qi) in w.iter_mut().zip(&q) {
            *wi -= alpha * qi;
        }
        if let (Some(prev), Some(&b)) = (basis.last(), betas.last()) {
            for (wi, pi) in w.iter_mut().zip(prev) {
                *wi -= b * pi;
            }
        }
        basis.push(q.clone());
        // Two passes of Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
        }
        alphas.push(alpha);
        let beta = dot(&w, &w).sqrt();
        scale = scale.max(alpha.abs()).max(beta);

        let m = alphas.len();
        let exhausted = k + 1 == n || beta <= 1e-14 * scale.max(1e-300);
        if exhausted || m % 4 == 0 || m < 4 {
            let (top, last_comp) = tridiagonal_top(&alphas, &betas);
            theta = top;
            if exhausted || (beta * last_comp).abs() <= tol * scale.max(1e-300) {
                break;
            }
        }
        for (qi, wi) in q.iter_mut().zip(&w) {
            *qi = wi / beta;
        }
        betas.push(beta);
    }
    theta
}

/// Largest eigenvalue of the symmetric tridiagonal matrix with diagonal
/// `alphas` and off-diagonal `betas`, with the last component of its
/// eigenvector.
fn tridiagonal_top(alphas: &[f64], betas: &[f64]) -> (f64, f64) {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let (values, vectors) = symmetric_eigen(&t);
    (values[m - 1], vectors[(m - 1, m - 1)])
}
