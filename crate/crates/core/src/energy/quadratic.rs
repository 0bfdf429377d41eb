use super::{validate_input, Energy};
use crate::error::{check_dim, HifmError, Result};
use crate::linalg::{eigh_sym, sub, SymMatrix, DEFAULT_EIG_TOL};

/// `V(y) = ½ (y - y*)ᵀ A (y - y*)` with `A` positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticParams {
    pub center: Vec<f64>,
    pub matrix: SymMatrix,
}

impl QuadraticParams {
    pub fn new(center: Vec<f64>, matrix: SymMatrix) -> Result<Self> {
        check_dim(matrix.dim(), center.len())?;
        crate::error::check_finite("quadratic center", &center)?;
        let e = eigh_sym(&matrix, DEFAULT_EIG_TOL)?;
        if let Some((i, a)) = e.eigvals.iter().enumerate().find(|(_, a)| **a < -1e-10) {
            return Err(HifmError::Validation(format!(
                "quadratic matrix is not positive semidefinite: eigenvalue {a:e} at index {i}"
            )));
        }
        Ok(Self { center, matrix })
    }

    /// Axis-aligned well centered at the origin.
    pub fn diagonal(eigenvalues: &[f64]) -> Result<Self> {
        Self::new(vec![0.0; eigenvalues.len()], SymMatrix::from_diag(eigenvalues))
    }
}

impl Energy for QuadraticParams {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, y: &[f64]) -> Result<f64> {
        validate_input(self.dim(), y)?;
        let d = sub(y, &self.center);
        let ad = self.matrix.matvec(&d);
        Ok(0.5 * crate::linalg::dot(&d, &ad).max(0.0))
    }

    fn gradient(&self, y: &[f64]) -> Result<Vec<f64>> {
        validate_input(self.dim(), y)?;
        Ok(self.matrix.matvec(&sub(y, &self.center)))
    }

    fn hessian(&self, y: &[f64]) -> Result<SymMatrix> {
        validate_input(self.dim(), y)?;
        Ok(self.matrix.clone())
    }
}
