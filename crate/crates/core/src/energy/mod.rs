//! Energy functions with analytic gradients and Hessians.
//!
//! Three kinds are provided: a quadratic well, the Lennard-Jones cluster
//! potential, and the distance-constraint formation energy used to build
//! Hessians at particle configurations. Central finite-difference versions of
//! the gradient and Hessian are exposed as verification oracles.

mod formation;
mod lennard_jones;
mod pair;
mod quadratic;

pub use formation::FormationParams;
pub use lennard_jones::{LennardJonesParams, COINCIDENT_DISTANCE};
pub use quadratic::QuadraticParams;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, check_finite, HifmError, Result};
use crate::linalg::{norm, SymMatrix};

pub trait Energy {
    /// Ambient dimension of a configuration.
    fn dim(&self) -> usize;
    fn value(&self, y: &[f64]) -> Result<f64>;
    fn gradient(&self, y: &[f64]) -> Result<Vec<f64>>;
    fn hessian(&self, y: &[f64]) -> Result<SymMatrix>;
}

fn validate_input(dim: usize, y: &[f64]) -> Result<()> {
    check_dim(dim, y.len())?;
    check_finite("configuration", y)
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnergyModel {
    Quadratic(QuadraticParams),
    LennardJones(LennardJonesParams),
    Formation(FormationParams),
}

impl EnergyModel {
    fn inner(&self) -> &dyn Energy {
        match self {
            EnergyModel::Quadratic(p) => p,
            EnergyModel::LennardJones(p) => p,
            EnergyModel::Formation(p) => p,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EnergyModel::Quadratic(_) => "quadratic",
            EnergyModel::LennardJones(_) => "lennard_jones",
            EnergyModel::Formation(_) => "formation",
        }
    }

    /// Spatial dimension for particle energies.
    pub fn spatial_dim(&self) -> Option<usize> {
        match self {
            EnergyModel::Quadratic(_) => None,
            EnergyModel::LennardJones(p) => Some(p.spatial_dim),
            EnergyModel::Formation(p) => Some(p.spatial_dim),
        }
    }
}

impl Energy for EnergyModel {
    fn dim(&self) -> usize {
        self.inner().dim()
    }
    fn value(&self, y: &[f64]) -> Result<f64> {
        self.inner().value(y)
    }
    fn gradient(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.inner().gradient(y)
    }
    fn hessian(&self, y: &[f64]) -> Result<SymMatrix> {
        self.inner().hessian(y)
    }
}

impl From<QuadraticParams> for EnergyModel {
    fn from(p: QuadraticParams) -> Self {
        EnergyModel::Quadratic(p)
    }
}

impl From<LennardJonesParams> for EnergyModel {
    fn from(p: LennardJonesParams) -> Self {
        EnergyModel::LennardJones(p)
    }
}

impl From<FormationParams> for EnergyModel {
    fn from(p: FormationParams) -> Self {
        EnergyModel::Formation(p)
    }
}

fn fd_steps(y: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(HifmError::Validation(format!("finite-difference step must be positive, got {h}")));
    }
    Ok(y.iter().map(|v| h * (1.0 + v.abs())).collect())
}

/// Central-difference gradient with per-coordinate step `h·(1 + |y_k|)`.
pub fn fd_gradient<E: Energy + ?Sized>(e: &E, y: &[f64], h: f64) -> Result<Vec<f64>> {
    let steps = fd_steps(y, h)?;
    let mut x = y.to_vec();
    let mut g = Vec::with_capacity(y.len());
    for k in 0..y.len() {
        x[k] = y[k] + steps[k];
        let plus = e.value(&x)?;
        x[k] = y[k] - steps[k];
        let minus = e.value(&x)?;
        x[k] = y[k];
        g.push((plus - minus) / (2.0 * steps[k]));
    }
    Ok(g)
}

/// Central differences of the analytic gradient, symmetrized as `(H + Hᵀ)/2`.
pub fn fd_hessian<E: Energy + ?Sized>(e: &E, y: &[f64], h: f64) -> Result<SymMatrix> {
    let steps = fd_steps(y, h)?;
    let n = y.len();
    let mut x = y.to_vec();
    let mut hess = vec![0.0; n * n];
    for k in 0..n {
        x[k] = y[k] + steps[k];
        let plus = e.gradient(&x)?;
        x[k] = y[k] - steps[k];
        let minus = e.gradient(&x)?;
        x[k] = y[k];
        for i in 0..n {
            hess[i * n + k] = (plus[i] - minus[i]) / (2.0 * steps[k]);
        }
    }
    Ok(SymMatrix::symmetrize(n, hess))
}

/// Infinitesimal generator of `V` under `dy = -∇V dt + B dw`:
/// `-‖∇V(y)‖² + ½ tr(∇²V(y) B²)`.
pub fn generator_lv<E: Energy + ?Sized>(e: &E, y: &[f64], b: &SymMatrix) -> Result<f64> {
    check_dim(e.dim(), b.dim())?;
    let g = e.gradient(y)?;
    let h = e.hessian(y)?;
    let gn = norm(&g);
    Ok(-gn * gn + 0.5 * h.trace_product(&b.square()))
}

/// Rotates every particle block by `rotation` (row-major `d×d`) and then
/// translates it.
pub fn apply_rigid_motion(y: &[f64], rotation: &[f64], translation: &[f64], spatial_dim: usize) -> Result<Vec<f64>> {
    let d = spatial_dim;
    check_dim(d * d, rotation.len())?;
    check_dim(d, translation.len())?;
    if d == 0 || y.len() % d != 0 {
        return Err(HifmError::Validation(format!(
            "configuration length {} is not a multiple of spatial_dim {d}",
            y.len()
        )));
    }
    let mut err = 0.0;
    for i in 0..d {
        for j in 0..d {
            let rtr: f64 = (0..d).map(|k| rotation[k * d + i] * rotation[k * d + j]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            err += (rtr - target) * (rtr - target);
        }
    }
    if err.sqrt() > 1e-8 {
        return Err(HifmError::Validation(format!(
            "rotation is not orthogonal: ‖RᵀR - I‖_F = {:e}",
            err.sqrt()
        )));
    }
    let mut out = vec![0.0; y.len()];
    for (block, o) in y.chunks(d).zip(out.chunks_mut(d)) {
        for i in 0..d {
            o[i] = (0..d).map(|k| rotation[i * d + k] * block[k]).sum::<f64>() + translation[i];
        }
    }
    Ok(out)
}

/// Subtracts the per-axis mean over particles.
///
/// Panics if `y.len()` is not a multiple of `spatial_dim`.
pub fn zero_com_project(y: &[f64], spatial_dim: usize) -> Vec<f64> {
    let mut out = y.to_vec();
    zero_com_in_place(&mut out, spatial_dim);
    out
}

pub fn zero_com_in_place(y: &mut [f64], spatial_dim: usize) {
    assert!(spatial_dim > 0 && y.len() % spatial_dim == 0, "length must be a multiple of spatial_dim");
    let m = y.len() / spatial_dim;
    if m == 0 {
        return;
    }
    for a in 0..spatial_dim {
        let mean = (0..m).map(|i| y[i * spatial_dim + a]).sum::<f64>() / m as f64;
        for i in 0..m {
            y[i * spatial_dim + a] -= mean;
        }
    }
}

/// Haar-random proper rotation, row-major, from Gram–Schmidt on a Gaussian matrix.
pub fn random_rotation(spatial_dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    let d = spatial_dim;
    loop {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
        for _ in 0..d {
            let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            for c in &cols {
                let p = crate::linalg::dot(&v, c);
                v.iter_mut().zip(c).for_each(|(x, y)| *x -= p * y);
            }
            let nv = norm(&v);
            if nv < 1e-8 {
                break;
            }
            v.iter_mut().for_each(|x| *x /= nv);
            cols.push(v);
        }
        if cols.len() < d {
            continue;
        }
        let mut r = vec![0.0; d * d];
        for (j, c) in cols.iter().enumerate() {
            for i in 0..d {
                r[i * d + j] = c[i];
            }
        }
        if determinant(&r, d) < 0.0 {
            for i in 0..d {
                r[i * d] = -r[i * d];
            }
        }
        return r;
    }
}

fn determinant(r: &[f64], d: usize) -> f64 {
    match d {
        1 => r[0],
        2 => r[0] * r[3] - r[1] * r[2],
        3 => {
            r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6])
                + r[2] * (r[3] * r[7] - r[4] * r[6])
        }
        _ => unimplemented!("determinant only for spatial_dim <= 3"),
    }
}
