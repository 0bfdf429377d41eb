//! Dense symmetric linear algebra.
//!
//! Everything downstream works in the eigenbasis of a Hessian, so this module
//! provides a deterministic cyclic Jacobi eigensolver together with the two
//! operations built on it: applying a scalar function of the spectrum to a
//! vector, and projecting onto a subset of eigenvectors.

use crate::error::{check_dim, HifmError, Result};
use rand::Rng;

/// Relative Frobenius tolerance for accepting a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Default convergence tolerance for [`eigh_sym`]: off-diagonal Frobenius norm
/// relative to the Frobenius norm of the input.
pub const DEFAULT_EIG_TOL: f64 = 1e-12;
/// Maximum number of Jacobi sweeps before reporting non-convergence.
pub const MAX_SWEEPS: usize = 100;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `a - b`, elementwise.
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Dense symmetric matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Validates finiteness and symmetry, then stores the exactly symmetrized
    /// matrix `(A + Aᵀ)/2`.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(HifmError::Validation("matrix dimension must be positive".into()));
        }
        check_dim(dim * dim, data.len())?;
        crate::error::check_finite("matrix", &data)?;
        let mut asym = 0.0;
        let mut total = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let d = data[i * dim + j] - data[j * dim + i];
                asym += d * d;
                total += data[i * dim + j] * data[i * dim + j];
            }
        }
        // each asymmetric pair is counted twice, as is its contribution to ‖A - Aᵀ‖
        if asym.sqrt() > SYMMETRY_TOL * total.sqrt() {
            return Err(HifmError::Validation(format!(
                "matrix is not symmetric: ‖A - Aᵀ‖_F = {:e}, ‖A‖_F = {:e}",
                asym.sqrt(),
                total.sqrt()
            )));
        }
        Ok(Self::symmetrize(dim, data))
    }

    /// Returns `(A + Aᵀ)/2` without a symmetry check.
    pub fn symmetrize(dim: usize, mut data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim * dim);
        for i in 0..dim {
            for j in (i + 1)..dim {
                let m = 0.5 * (data[i * dim + j] + data[j * dim + i]);
                data[i * dim + j] = m;
                data[j * dim + i] = m;
            }
        }
        Self { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![1.0; dim])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, d) in diag.iter().enumerate() {
            m.data[i * dim + i] = *d;
        }
        m
    }

    /// Builds the matrix from the upper triangle of `f(i, j)`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m.data[i * dim + j] = v;
                m.data[j * dim + i] = v;
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// `tr(self · other)`.
    pub fn trace_product(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        // tr(AB) = Σ_ij A_ij B_ji and B is symmetric
        dot(&self.data, &other.data)
    }

    /// `self · self`, which is again symmetric.
    pub fn square(&self) -> SymMatrix {
        let n = self.dim;
        SymMatrix::from_fn(n, |i, j| (0..n).map(|k| self.get(i, k) * self.get(k, j)).sum())
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, other.dim);
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }
}

/// Orthonormal eigenbasis and ascending eigenvalues of a symmetric matrix.
///
/// Eigenvectors are stored contiguously: `eigvec(j)` is the j-th column of `P`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub eigvals: Vec<f64>,
    vectors: Vec<f64>,
    dim: usize,
}

impl EigenPair {
    /// The standard basis with the given eigenvalues (a diagonal matrix).
    pub fn diagonal(eigvals: Vec<f64>) -> Self {
        let dim = eigvals.len();
        let mut vectors = vec![0.0; dim * dim];
        for j in 0..dim {
            vectors[j * dim + j] = 1.0;
        }
        Self {
            eigvals,
            vectors,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eigvec(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.dim..(j + 1) * self.dim]
    }

    /// Coordinates of `x` in the eigenbasis, `Pᵀx`.
    pub fn to_basis(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim).map(|j| dot(self.eigvec(j), x)).collect()
    }

    /// Maps eigenbasis coordinates back, `P c`.
    pub fn from_basis(&self, c: &[f64]) -> Vec<f64> {
        assert_eq!(c.len(), self.dim);
        let mut out = vec![0.0; self.dim];
        for (j, cj) in c.iter().enumerate() {
            if *cj == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.eigvec(j)) {
                *o += cj * v;
            }
        }
        out
    }

    /// `P diag(d) Pᵀ x`.
    pub fn apply_diag(&self, d: &[f64], x: &[f64]) -> Vec<f64> {
        assert_eq!(d.len(), self.dim);
        let mut c = self.to_basis(x);
        for (ci, di) in c.iter_mut().zip(d) {
            *ci *= di;
        }
        self.from_basis(&c)
    }

    /// `P diag(d) Pᵀ` as a dense matrix.
    pub fn compose(&self, d: &[f64]) -> SymMatrix {
        let n = self.dim;
        SymMatrix::from_fn(n, |i, k| {
            (0..n)
                .map(|j| self.vectors[j * n + i] * d[j] * self.vectors[j * n + k])
                .sum()
        })
    }

    /// Reassembles `P diag(eigvals) Pᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        self.compose(&self.eigvals)
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps visit pairs `(p, q)` in row order; iteration stops once the
/// off-diagonal Frobenius norm falls below `tol · ‖A‖_F`. Eigenvalues are
/// returned ascending and each eigenvector is oriented so that its
/// largest-magnitude component (first index on ties) is positive.
pub fn eigh_sym(a: &SymMatrix, tol: f64) -> Result<EigenPair> {
    if !(tol > 0.0) {
        return Err(HifmError::Validation(format!("eigensolver tolerance must be positive, got {tol}")));
    }
    let n = a.dim();
    let mut m = a.as_slice().to_vec();
    // v is row-major n×n; column j accumulates the j-th eigenvector
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = a.frobenius_norm();
    let mut converged = false;
    for _ in 0..=MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= tol * scale {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(HifmError::Numerical(format!(
            "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]).then(i.cmp(&j)));
    let eigvals = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for &j in &order {
        let mut col: Vec<f64> = (0..n).map(|k| v[k * n + j]).collect();
        let mut lead = 0;
        for k in 1..n {
            if col[k].abs() > col[lead].abs() {
                lead = k;
            }
        }
        if col[lead] < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
        vectors.extend(col);
    }
    Ok(EigenPair {
        eigvals,
        vectors,
        dim: n,
    })
}

/// Computes `P diag[f(αᵢ)] Pᵀ x`.
pub fn spectral_apply(p: &EigenPair, f: impl Fn(f64) -> f64, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(p.dim(), x.len())?;
    let mut d = Vec::with_capacity(p.dim());
    for (i, a) in p.eigvals.iter().enumerate() {
        let fa = f(*a);
        if !fa.is_finite() {
            return Err(HifmError::Numerical(format!(
                "spectral function is not finite at eigenvalue index {i} (alpha = {a:e})"
            )));
        }
        d.push(fa);
    }
    Ok(p.apply_diag(&d, x))
}

/// Orthogonal projector `Σ_{i: mask[i]} pᵢ pᵢᵀ` onto the selected eigenvectors.
pub fn subspace_projector(p: &EigenPair, mask: &[bool]) -> Result<SymMatrix> {
    check_dim(p.dim(), mask.len())?;
    let d: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    Ok(p.compose(&d))
}

/// Orthonormal columns from Gram-Schmidt on uniform draws.
pub fn random_orthogonal(n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for c in &cols {
            let d = dot(&v, c);
            v.iter_mut().zip(c).for_each(|(x, y)| *x -= d * y);
        }
        let nv = norm(&v);
        if nv > 1e-3 {
            cols.push(v.iter().map(|x| x / nv).collect());
        }
    }
    cols
}

/// `Σ_k d_k q_k q_kᵀ` for orthonormal columns `q`.
pub fn from_spectrum(q: &[Vec<f64>], d: &[f64]) -> SymMatrix {
    let n = d.len();
    SymMatrix::from_fn(n, |i, j| (0..n).map(|k| q[k][i] * d[k] * q[k][j]).sum())
}
