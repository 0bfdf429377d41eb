use super::{pair, validate_input, Energy};
use crate::error::{HifmError, Result};
use crate::linalg::SymMatrix;

/// Pair distance below which two particles are treated as coincident.
pub const COINCIDENT_DISTANCE: f64 = 1e-12;

/// Lennard-Jones cluster, `V = Σ_{i<j} 4ε((σ/r)¹² - (σ/r)⁶)` over all pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct LennardJonesParams {
    pub m: usize,
    pub spatial_dim: usize,
    pub epsilon: f64,
    pub sigma: f64,
}

impl LennardJonesParams {
    pub fn new(m: usize, spatial_dim: usize, epsilon: f64, sigma: f64) -> Result<Self> {
        if m < 2 {
            return Err(HifmError::Validation(format!("Lennard-Jones needs m >= 2 particles, got {m}")));
        }
        if !(spatial_dim == 2 || spatial_dim == 3) {
            return Err(HifmError::Validation(format!("spatial_dim must be 2 or 3, got {spatial_dim}")));
        }
        if !(epsilon > 0.0 && sigma > 0.0) {
            return Err(HifmError::Validation(format!(
                "epsilon and sigma must be positive, got {epsilon}, {sigma}"
            )));
        }
        Ok(Self {
            m,
            spatial_dim,
            epsilon,
            sigma,
        })
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let m = self.m;
        (0..m).flat_map(move |i| ((i + 1)..m).map(move |j| (i, j)))
    }

    // derivatives with respect to ρ = r²
    fn term(&self, rho: f64) -> Result<pair::PairEval> {
        if rho < COINCIDENT_DISTANCE * COINCIDENT_DISTANCE {
            return Err(HifmError::Domain(format!(
                "coincident particles: pair distance {:e} < {COINCIDENT_DISTANCE:e}",
                rho.sqrt()
            )));
        }
        let s2 = self.sigma * self.sigma;
        let s6 = s2 * s2 * s2;
        let s12 = s6 * s6;
        let inv = 1.0 / rho;
        let inv3 = inv * inv * inv;
        let inv6 = inv3 * inv3;
        let e4 = 4.0 * self.epsilon;
        let f = e4 * (s12 * inv6 - s6 * inv3);
        let f1 = e4 * (-6.0 * s12 * inv6 + 3.0 * s6 * inv3) * inv;
        let f2 = e4 * (42.0 * s12 * inv6 - 12.0 * s6 * inv3) * inv * inv;
        Ok((f, f1, f2))
    }
}

impl Energy for LennardJonesParams {
    fn dim(&self) -> usize {
        self.m * self.spatial_dim
    }

    fn value(&self, y: &[f64]) -> Result<f64> {
        validate_input(self.dim(), y)?;
        pair::value(y, self.spatial_dim, self.pairs(), |_, rho| self.term(rho))
    }

    fn gradient(&self, y: &[f64]) -> Result<Vec<f64>> {
        validate_input(self.dim(), y)?;
        pair::gradient(y, self.spatial_dim, self.pairs(), |_, rho| self.term(rho))
    }

    fn hessian(&self, y: &[f64]) -> Result<SymMatrix> {
        validate_input(self.dim(), y)?;
        pair::hessian(y, self.spatial_dim, self.pairs(), |_, rho| self.term(rho))
    }
}
