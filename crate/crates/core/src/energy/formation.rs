use std::collections::HashSet;

use super::{pair, validate_input, Energy};
use crate::error::{check_dim, HifmError, Result};
use crate::linalg::SymMatrix;

/// Distance-constraint formation energy
/// `V(y) = ¼ Σ_{(i,j)∈E} (‖yᵢ - yⱼ‖² - d²ᵢⱼ)²` over undirected edges.
#[derive(Clone, Debug, PartialEq)]
pub struct FormationParams {
    pub m: usize,
    pub spatial_dim: usize,
    /// Undirected edges with `i < j`.
    pub edges: Vec<(usize, usize)>,
    /// Desired distance per edge.
    pub distances: Vec<f64>,
}

impl FormationParams {
    pub fn new(m: usize, spatial_dim: usize, edges: Vec<(usize, usize)>, distances: Vec<f64>) -> Result<Self> {
        if !(spatial_dim == 2 || spatial_dim == 3) {
            return Err(HifmError::Validation(format!("spatial_dim must be 2 or 3, got {spatial_dim}")));
        }
        check_dim(edges.len(), distances.len())?;
        let mut seen = HashSet::new();
        for (&(i, j), &d) in edges.iter().zip(&distances) {
            if !(i < j && j < m) {
                return Err(HifmError::Validation(format!(
                    "edge ({i}, {j}) must satisfy i < j < m = {m}"
                )));
            }
            if !(d > 0.0 && d.is_finite()) {
                return Err(HifmError::Validation(format!("edge ({i}, {j}) has distance {d}, expected > 0")));
            }
            if !seen.insert((i, j)) {
                return Err(HifmError::Validation(format!("duplicate edge ({i}, {j})")));
            }
        }
        Ok(Self {
            m,
            spatial_dim,
            edges,
            distances,
        })
    }

    /// Complete graph whose desired distances are the pairwise distances
    /// observed in `y`, so `y` is an exact minimum.
    pub fn complete_from_sample(y: &[f64], m: usize, spatial_dim: usize) -> Result<Self> {
        check_dim(m * spatial_dim, y.len())?;
        let mut edges = Vec::new();
        let mut distances = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                edges.push((i, j));
                distances.push(pair::diff(y, i, j, spatial_dim).1.sqrt());
            }
        }
        Self::new(m, spatial_dim, edges, distances)
    }

    fn term(&self, e: usize, rho: f64) -> Result<pair::PairEval> {
        let s = rho - self.distances[e] * self.distances[e];
        Ok((0.25 * s * s, 0.5 * s, 0.5))
    }
}

impl Energy for FormationParams {
    fn dim(&self) -> usize {
        self.m * self.spatial_dim
    }

    fn value(&self, y: &[f64]) -> Result<f64> {
        validate_input(self.dim(), y)?;
        pair::value(y, self.spatial_dim, self.edges.iter().copied(), |e, rho| self.term(e, rho))
    }

    fn gradient(&self, y: &[f64]) -> Result<Vec<f64>> {
        validate_input(self.dim(), y)?;
        pair::gradient(y, self.spatial_dim, self.edges.iter().copied(), |e, rho| self.term(e, rho))
    }

    fn hessian(&self, y: &[f64]) -> Result<SymMatrix> {
        validate_input(self.dim(), y)?;
        pair::hessian(y, self.spatial_dim, self.edges.iter().copied(), |e, rho| self.term(e, rho))
    }
}
