use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CsbError, Result};

/// Weighted causal adjacency matrix of the SEM.
///
/// `entries[(i, j)]` is the causal effect of the overall reward of arm `j`
/// on the overall reward of arm `i`. The diagonal is zero and all weights
/// are nonnegative. When `dag_constrained` is set the matrix is nilpotent
/// (a topological order exists); otherwise the spectral radius must stay
/// below one so that `(I - W)` remains invertible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AdjacencyMatrixRepr", into = "AdjacencyMatrixRepr")]
pub struct AdjacencyMatrix {
    entries: DMatrix<f64>,
    dag_constrained: bool,
    #[serde(skip)]
    topo: Option<Vec<usize>>,
}

/// Row-major serialization form.
#[derive(Serialize, Deserialize)]
struct AdjacencyMatrixRepr {
    entries: Vec<Vec<f64>>,
    dag_constrained: bool,
}

impl TryFrom<AdjacencyMatrixRepr> for AdjacencyMatrix {
    type Error = CsbError;

    fn try_from(repr: AdjacencyMatrixRepr) -> Result<Self> {
        let k = repr.entries.len();
        if repr.entries.iter().any(|row| row.len() != k) {
            return Err(CsbError::invalid("adjacency matrix must be square"));
        }
        let entries = DMatrix::from_fn(k, k, |i, j| repr.entries[i][j]);
        AdjacencyMatrix::new(entries, repr.dag_constrained)
    }
}

impl From<AdjacencyMatrix> for AdjacencyMatrixRepr {
    fn from(w: AdjacencyMatrix) -> Self {
        let k = w.k();
        AdjacencyMatrixRepr {
            entries: (0..k)
                .map(|i| (0..k).map(|j| w.entries[(i, j)]).collect())
                .collect(),
            dag_constrained: w.dag_constrained,
        }
    }
}

impl AdjacencyMatrix {
    pub fn new(entries: DMatrix<f64>, dag_constrained: bool) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(CsbError::invalid("adjacency matrix must be square"));
        }
        let k = entries.nrows();
        for i in 0..k {
            if entries[(i, i)] != 0.0 {
                return Err(CsbError::invalid(format!(
                    "nonzero diagonal entry at ({i}, {i})"
                )));
            }
        }
        if entries.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(CsbError::invalid(
                "adjacency weights must be finite and nonnegative",
            ));
        }
        let topo = if dag_constrained {
            match topological_order(&entries) {
                Some(order) => Some(order),
                None => {
                    return Err(CsbError::invalid(
                        "dag_constrained adjacency matrix contains a cycle",
                    ))
                }
            }
        } else {
            if spectral_radius(&entries) >= 1.0 {
                return Err(CsbError::invalid(
                    "cyclic adjacency matrix has spectral radius >= 1",
                ));
            }
            None
        };
        Ok(AdjacencyMatrix {
            entries,
            dag_constrained,
            topo,
        })
    }

    pub fn zeros(k: usize) -> Self {
        AdjacencyMatrix::new(DMatrix::zeros(k, k), true).expect("zero matrix is a valid DAG")
    }

    pub fn k(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dag_constrained(&self) -> bool {
        self.dag_constrained
    }

    pub fn is_dag(&self) -> bool {
        self.topo.is_some() || topological_order(&self.entries).is_some()
    }

    /// Solves `(I - W) y = z`.
    ///
    /// DAG-constrained matrices are solved by substitution along the
    /// topological order; cyclic ones fall back to an LU solve.
    pub fn solve(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.solve_system(z, false)
    }

    /// Solves `(I - W)^T w = c`, yielding the per-arm path weights
    /// `w^T = c^T (I - W)^{-1}`.
    pub fn solve_transpose(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        self.solve_system(c, true)
    }

    fn solve_system(&self, rhs: &DVector<f64>, transpose: bool) -> Result<DVector<f64>> {
        let k = self.k();
        if rhs.len() != k {
            return Err(CsbError::invalid("right-hand side dimension mismatch"));
        }
        if let Some(order) = &self.topo {
            let mut out = DVector::zeros(k);
            if transpose {
                // (I - W)^T: node j depends on every k it feeds into.
                for &j in order.iter().rev() {
                    let mut acc = rhs[j];
                    for i in 0..k {
                        let w = self.entries[(i, j)];
                        if w != 0.0 {
                            acc += w * out[i];
                        }
                    }
                    out[j] = acc;
                }
            } else {
                for &i in order {
                    let mut acc = rhs[i];
                    for j in 0..k {
                        let w = self.entries[(i, j)];
                        if w != 0.0 {
                            acc += w * out[j];
                        }
                    }
                    out[i] = acc;
                }
            }
            Ok(out)
        } else {
            let mut system = DMatrix::identity(k, k) - &self.entries;
            if transpose {
                system = system.transpose();
            }
            system
                .lu()
                .solve(rhs)
                .ok_or_else(|| CsbError::numeric("(I - W) is singular"))
        }
    }
}

/// Returns true iff the zero-diagonal matrix `w` has no directed cycle,
/// checked by repeated elimination of zero-in-degree nodes over the
/// nonzero entries.
pub fn validate_dag(w: &DMatrix<f64>) -> Result<bool> {
    if w.nrows() != w.ncols() {
        return Err(CsbError::invalid("adjacency matrix must be square"));
    }
    for i in 0..w.nrows() {
        if w[(i, i)] != 0.0 {
            return Err(CsbError::invalid(format!(
                "nonzero diagonal entry at ({i}, {i})"
            )));
        }
    }
    Ok(topological_order(w).is_some())
}

/// Kahn elimination over the nonzero sparsity pattern. Node `i` depends on
/// `j` whenever `w[(i, j)] != 0`; the returned order lists every node after
/// all of its dependencies, or `None` if a cycle exists.
pub fn topological_order(w: &DMatrix<f64>) -> Option<Vec<usize>> {
    let k = w.nrows();
    let mut indegree: Vec<usize> = (0..k)
        .map(|i| (0..k).filter(|&j| w[(i, j)] != 0.0).count())
        .collect();
    let mut ready: Vec<usize> = (0..k).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(k);
    while let Some(j) = ready.pop() {
        order.push(j);
        for i in 0..k {
            if w[(i, j)] != 0.0 {
                indegree[i] -= 1;
                if indegree[i] == 0 {
                    ready.push(i);
                }
            }
        }
    }
    (order.len() == k).then_some(order)
}

/// Power-iteration estimate of the spectral radius of `|W|`.
pub fn spectral_radius(w: &DMatrix<f64>) -> f64 {
    let k = w.nrows();
    if k == 0 {
        return 0.0;
    }
    let abs = w.map(f64::abs);
    let mut v = DVector::from_element(k, 1.0 / (k as f64).sqrt());
    let mut radius = 0.0;
    for _ in 0..200 {
        let next = &abs * &v;
        let norm = next.norm();
        if norm == 0.0 {
            return 0.0;
        }
        radius = norm;
        v = next / norm;
    }
    radius
}
