//! Simple undirected contact graphs.
//!
//! Nodes are dense indices `0..n`. Edges are stored canonically as sorted
//! `(u, v)` pairs with `u < v`; neighbor lists and (for moderate `n`) a dense
//! symmetric 0/1 adjacency matrix are kept alongside.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spectral;

/// Dense adjacency is cached up to this many nodes.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    dense: Option<DMatrix<f64>>,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.edges == other.edges
    }
}

impl Graph {
    /// Builds a graph from an edge iterator. Duplicates and reversed pairs
    /// collapse; self-loops and out-of-range endpoints are rejected.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u == v {
                return Err(Error::domain(format!("self-loop at node {u}")));
            }
            if u >= n || v >= n {
                return Err(Error::domain(format!(
                    "edge ({u}, {v}) out of range for n = {n}"
                )));
            }
            set.insert((u.min(v), u.max(v)));
        }
        Ok(Self::from_canonical(n, set.into_iter().collect()))
    }

    fn from_canonical(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for &(u, v) in &edges {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        let dense = (n <= DENSE_LIMIT).then(|| {
            let mut a = DMatrix::zeros(n, n);
            for &(u, v) in &edges {
                a[(u, v)] = 1.0;
                a[(v, u)] = 1.0;
            }
            a
        });
        Graph {
            n,
            edges,
            neighbors,
            dense,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// Canonical edge list, sorted, `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.neighbors[u].binary_search(&v).is_ok()
    }

    /// Dense symmetric adjacency matrix.
    pub fn adjacency(&self) -> DMatrix<f64> {
        match &self.dense {
            Some(a) => a.clone(),
            None => {
                let mut a = DMatrix::zeros(self.n, self.n);
                for &(u, v) in &self.edges {
                    a[(u, v)] = 1.0;
                    a[(v, u)] = 1.0;
                }
                a
            }
        }
    }

    /// `y = A x` using neighbor lists.
    pub fn adjacency_mul(&self, x: &[f64], y: &mut [f64]) {
        for (i, nbrs) in self.neighbors.iter().enumerate() {
            y[i] = nbrs.iter().map(|&j| x[j]).sum();
        }
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        2.0 * self.edges.iter().map(|&(u, v)| x[u] * x[v]).sum::<f64>()
    }

    /// Largest adjacency eigenvalue λ₁(A).
    pub fn spectral_radius(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        spectral::largest_eigenvalue(&self.adjacency())
    }

    /// Serializes to the edge-list format with an explicit node-count header.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::with_capacity(8 * self.edges.len() + 16);
        let _ = writeln!(out, "n {}", self.n);
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }

    /// Seeded preferential-attachment graph. Starts from a clique on
    /// `attach + 1` nodes; each new node links to `attach` distinct existing
    /// nodes chosen with probability proportional to degree.
    pub fn barabasi_albert(n: usize, attach: usize, seed: u64) -> Result<Self> {
        if attach == 0 || attach + 1 > n {
            return Err(Error::domain(format!(
                "preferential attachment needs 1 <= attach < n (attach = {attach}, n = {n})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        // Each endpoint appears once per incident edge.
        let mut stubs: Vec<usize> = Vec::new();
        for u in 0..=attach {
            for v in (u + 1)..=attach {
                edges.push((u, v));
                stubs.push(u);
                stubs.push(v);
            }
        }
        for new in (attach + 1)..n {
            let mut targets = BTreeSet::new();
            while targets.len() < attach {
                let t = stubs[rng.random_range(0..stubs.len())];
                targets.insert(t);
            }
            for &t in &targets {
                edges.push((t, new));
                stubs.push(t);
                stubs.push(new);
            }
        }
        Graph::from_edges(n, edges)
    }
}

/// Parses the edge-list format: one `u v` pair per line, `#` comments, and an
/// optional leading `n <count>` header that fixes the node count.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut forced_n: Option<usize> = None;
    let mut seen_data = false;
    let mut edges = Vec::new();
    let mut max_index: Option<usize> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let first = tokens.next().unwrap_or_default();
        if first == "n" && !seen_data {
            let count = tokens.next().ok_or_else(|| Error::Parse {
                line: line_no,
                message: "header `n` without a count".into(),
            })?;
            forced_n = Some(parse_index(count, line_no)?);
            if tokens.next().is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "trailing tokens after header".into(),
                });
            }
            seen_data = true;
            continue;
        }
        seen_data = true;
        let second = tokens.next().ok_or_else(|| Error::Parse {
            line: line_no,
            message: "expected two node indices".into(),
        })?;
        if tokens.next().is_some() {
            return Err(Error::Parse {
                line: line_no,
                message: "expected exactly two node indices".into(),
            });
        }
        let u = parse_index(first, line_no)?;
        let v = parse_index(second, line_no)?;
        if u == v {
            return Err(Error::Parse {
                line: line_no,
                message: format!("self-loop on node {u}"),
            });
        }
        if let Some(n) = forced_n {
            if u >= n || v >= n {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("node index out of range for header n = {n}"),
                });
            }
        }
        max_index = Some(max_index.unwrap_or(0).max(u).max(v));
        edges.push((u, v));
    }

    let n = forced_n.unwrap_or_else(|| max_index.map_or(0, |m| m + 1));
    Graph::from_edges(n, edges)
}

fn parse_index(token: &str, line: usize) -> Result<usize> {
    token.parse::<usize>().map_err(|_| Error::Parse {
        line,
        message: format!("`{token}` is not a nonnegative integer"),
    })
}

/// Dominant adjacency eigenvector, nonnegative with unit 2-norm.
///
/// When the top eigenvalue is shared by several components the all-ones
/// vector is projected onto the whole dominant eigenspace, which is the
/// limit of power iteration from the all-ones start. Nodes outside that
/// eigenspace (isolated nodes included) get 0.
pub fn eigenvector_centrality(g: &Graph, tol: f64) -> Result<Vec<f64>> {
    if g.m() == 0 {
        return Err(Error::domain(
            "eigenvector centrality is undefined on a graph without edges",
        ));
    }
    let n = g.n();
    let mut v = if n <= spectral::DENSE_EIGEN_LIMIT {
        let (values, vectors) = spectral::symmetric_eigen(&g.adjacency());
        let top = values[n - 1];
        let cluster = 1e-9 * top.abs().max(1.0);
        let ones = DVector::from_element(n, 1.0);
        let mut proj = DVector::zeros(n);
        for (k, &lam) in values.iter().enumerate() {
            if lam >= top - cluster {
                let q = vectors.column(k);
                proj += q * q.dot(&ones);
            }
        }
        proj
    } else {
        let (_, vec) = spectral::power_iteration(
            n,
            |x, y| {
                g.adjacency_mul(x, y);
                for (yi, xi) in y.iter_mut().zip(x) {
                    *yi += xi;
                }
            },
            tol.min(1e-10),
            spectral::POWER_MAX_ITERS,
        );
        DVector::from_vec(vec)
    };
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::domain("centrality vector vanished"));
    }
    v /= norm;
    Ok(v.iter().copied().collect())
}
