//! Communication graph, Laplacian and Kron reduction.
//!
//! The critical-node average-voltage observer eliminates the ordinary nodes
//! from the communication Laplacian. The eliminated nodes become algebraic
//! relays whose estimate is the weighted mean of their neighbors, and the
//! remaining critical nodes see the Schur complement `L11 - L12 L22^-1 L21`
//! as a virtual communication network.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{submatrix, Factorized};

/// Undirected weighted communication graph with a per-node activity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    weights: DMatrix<f64>,
    active: Vec<bool>,
}

impl CommGraph {
    /// Graph with `n` active nodes and no edges.
    pub fn empty(n: usize) -> Self {
        Self {
            weights: DMatrix::zeros(n, n),
            active: vec![true; n],
        }
    }

    /// Builds a graph from 0-based undirected edges `(i, j, weight)`.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::DanglingReference {
                    context: "communication edge".into(),
                    node: i.max(j) + 1,
                    count: n,
                });
            }
            if i == j {
                return Err(Error::invalid("edge", format!("self loop at node {}", i + 1)));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::invalid("edge weight", format!("{w} is not a finite nonnegative number")));
            }
            g.weights[(i, j)] = w;
            g.weights[(j, i)] = w;
        }
        Ok(g)
    }

    /// Validates an explicit weight matrix.
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self> {
        if !weights.is_square() {
            return Err(Error::invalid("adjacency", "matrix is not square"));
        }
        let n = weights.nrows();
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::invalid("adjacency", format!("nonzero diagonal at node {}", i + 1)));
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if !(w >= 0.0) || !w.is_finite() || w != weights[(j, i)] {
                    return Err(Error::invalid(
                        "adjacency",
                        format!("entry ({}, {}) must be finite, nonnegative and symmetric", i + 1, j + 1),
                    ));
                }
            }
        }
        Ok(Self {
            weights,
            active: vec![true; n],
        })
    }

    pub fn node_count(&self) -> usize {
        self.active.len()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    pub fn set_active(&mut self, i: usize, active: bool) {
        self.active[i] = active;
    }

    /// Copy of the graph with the given activity mask.
    pub fn with_active(&self, active: &[bool]) -> Self {
        assert_eq!(active.len(), self.node_count());
        Self {
            weights: self.weights.clone(),
            active: active.to_vec(),
        }
    }

    pub fn active_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&i| self.active[i]).collect()
    }

    /// Effective weight: zero when either endpoint is inactive.
    pub fn effective_weight(&self, i: usize, j: usize) -> f64 {
        if self.active[i] && self.active[j] {
            self.weights[(i, j)]
        } else {
            0.0
        }
    }

    /// Undirected edges `(i, j, w)` with `i < j` and `w > 0`, ignoring activity.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.node_count();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.weights[(i, j)] > 0.0 {
                    out.push((i, j, self.weights[(i, j)]));
                }
            }
        }
        out
    }
}

/// Graph Laplacian `L = D - A`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix(DMatrix<f64>);

impl LaplacianMatrix {
    /// Wraps a matrix without checking it; see [`LaplacianMatrix::check`].
    pub fn from_matrix_unchecked(m: DMatrix<f64>) -> Self {
        Self(m)
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Checks symmetry, zero row sums and nonpositive off-diagonals to `tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        let n = self.dim();
        let scale = self.0.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        let tol = tol * scale;
        for i in 0..n {
            let row_sum: f64 = self.0.row(i).iter().sum();
            if row_sum.abs() > tol {
                return Err(Error::invalid("laplacian", format!("row {} sums to {row_sum:e}", i + 1)));
            }
            for j in 0..n {
                if (self.0[(i, j)] - self.0[(j, i)]).abs() > tol {
                    return Err(Error::invalid("laplacian", "not symmetric"));
                }
                if i != j && self.0[(i, j)] > tol {
                    return Err(Error::invalid("laplacian", format!("positive off-diagonal at ({}, {})", i + 1, j + 1)));
                }
            }
        }
        Ok(())
    }

    /// Connectivity of the graph whose edges are the negative off-diagonals.
    pub fn is_connected(&self, tol: f64) -> bool {
        let n = self.dim();
        let weights = DMatrix::from_fn(n, n, |i, j| if i != j && -self.0[(i, j)] > tol { 1.0 } else { 0.0 });
        is_connected(&CommGraph {
            weights,
            active: vec![true; n],
        })
    }
}

/// Splits the nodes into critical (voltage-regulated) and ordinary nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodePartition {
    critical: Vec<usize>,
    ordinary: Vec<usize>,
}

impl NodePartition {
    /// Partition of `n` nodes with the given 0-based critical set.
    pub fn new(n: usize, critical: &[usize]) -> Result<Self> {
        let mut crit = critical.to_vec();
        crit.sort_unstable();
        crit.dedup();
        if crit.len() != critical.len() {
            return Err(Error::invalid("critical set", "duplicate node"));
        }
        if let Some(&bad) = crit.iter().find(|&&i| i >= n) {
            return Err(Error::DanglingReference {
                context: "critical set".into(),
                node: bad + 1,
                count: n,
            });
        }
        if crit.is_empty() {
            return Err(Error::invalid("critical set", "at least one critical node is required"));
        }
        let ordinary = (0..n).filter(|i| crit.binary_search(i).is_err()).collect();
        Ok(Self {
            critical: crit,
            ordinary,
        })
    }

    /// Every node critical; the uniform controller's view of the network.
    pub fn all_critical(n: usize) -> Self {
        Self {
            critical: (0..n).collect(),
            ordinary: Vec::new(),
        }
    }

    pub fn critical(&self) -> &[usize] {
        &self.critical
    }

    pub fn ordinary(&self) -> &[usize] {
        &self.ordinary
    }

    pub fn node_count(&self) -> usize {
        self.critical.len() + self.ordinary.len()
    }

    pub fn is_critical(&self, i: usize) -> bool {
        self.critical.binary_search(&i).is_ok()
    }
}

/// `l_ii = sum_j a_ij`, `l_ij = -a_ij`; inactive nodes give zero rows and columns.
pub fn laplacian(graph: &CommGraph) -> LaplacianMatrix {
    let n = graph.node_count();
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let w = graph.effective_weight(i, j);
                l[(i, j)] = -w;
                l[(i, i)] += w;
            }
        }
    }
    LaplacianMatrix(l)
}

/// True iff every pair of active nodes is joined by positive-weight edges
/// among active nodes.
pub fn is_connected(graph: &CommGraph) -> bool {
    let n = graph.node_count();
    let Some(start) = (0..n).find(|&i| graph.is_active(i)) else {
        return true;
    };
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if !seen[j] && graph.effective_weight(i, j) > 0.0 {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    (0..n).all(|i| !graph.is_active(i) || seen[i])
}

/// Schur complement `L11 - L12 L22^-1 L21` eliminating every index not in `retained`.
pub fn kron_reduce(lap: &LaplacianMatrix, retained: &[usize]) -> Result<LaplacianMatrix> {
    let eliminated: Vec<usize> = (0..lap.dim()).filter(|i| !retained.contains(i)).collect();
    kron_reduce_within(lap, retained, &eliminated)
}

/// Kron reduction over an explicit pair of disjoint index sets; indices in
/// neither set are ignored.
pub fn kron_reduce_within(lap: &LaplacianMatrix, retained: &[usize], eliminated: &[usize]) -> Result<LaplacianMatrix> {
    let l = lap.as_matrix();
    let l11 = submatrix(l, retained, retained);
    if eliminated.is_empty() {
        return Ok(LaplacianMatrix(l11));
    }
    let l12 = submatrix(l, retained, eliminated);
    let l21 = submatrix(l, eliminated, retained);
    let l22 = Factorized::new(&submatrix(l, eliminated, eliminated), "L22")?;
    let mut reduced = l11 - l12 * l22.solve_mat(&l21);
    // Restore exact symmetry lost to rounding.
    reduced = (&reduced + reduced.transpose()) * 0.5;
    Ok(LaplacianMatrix(reduced))
}

/// `-L_rr^-1 L_r,retained`: maps estimates held at `retained` to the relay
/// values `x_k = sum_j a_kj x_j / sum_j a_kj` solved simultaneously over
/// every node in `relays`.
pub fn relay_map(lap: &LaplacianMatrix, retained: &[usize], relays: &[usize]) -> Result<DMatrix<f64>> {
    let l = lap.as_matrix();
    if relays.is_empty() {
        return Ok(DMatrix::zeros(0, retained.len()));
    }
    let l22 = Factorized::new(&submatrix(l, relays, relays), "L22")?;
    let l21 = submatrix(l, relays, retained);
    Ok(-l22.solve_mat(&l21))
}

/// Relay map from the critical nodes to the ordinary nodes of `partition`.
pub fn ordinary_relay_map(lap: &LaplacianMatrix, partition: &NodePartition) -> Result<DMatrix<f64>> {
    relay_map(lap, partition.critical(), partition.ordinary())
}
