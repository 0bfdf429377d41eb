use crate::energy::zero_com_in_place;
use crate::error::{check_dim, HifmError, Result};
use crate::flow::{cond_field_finite, interpolant_field, mean_cov_z, ot_field};
use crate::model::{mode_transform, MlpParams, ModeConfig, MODEL_VZ_FLOOR};
use crate::spectrum::FlowSpec;

/// A field `v(y, z)` on the finite window `z ∈ [0, 1]` together with its
/// divergence in `y`.
///
/// For particle fields the divergence is the trace over the zero
/// center-of-mass subspace.
pub trait FiniteField: Sync {
    fn dim(&self) -> usize;

    fn velocity(&self, y: &[f64], z: f64) -> Result<Vec<f64>>;

    fn velocity_and_divergence(&self, y: &[f64], z: f64) -> Result<(Vec<f64>, f64)>;
}

/// Orthonormal basis of the translations of `m` particles in `d` dimensions.
fn translation_basis(n: usize, d: usize) -> Vec<Vec<f64>> {
    let m = n / d;
    let s = 1.0 / (m as f64).sqrt();
    (0..d)
        .map(|a| (0..n).map(|i| if i % d == a { s } else { 0.0 }).collect())
        .collect()
}

/// The learned network read through the finite transform
/// `v_y / max(v_z, floor)`, projected to zero center of mass for particles.
#[derive(Clone, Copy, Debug)]
pub struct LearnedField<'a> {
    pub model: &'a MlpParams,
    pub particle_dim: Option<usize>,
}

impl<'a> LearnedField<'a> {
    pub fn new(model: &'a MlpParams, particle_dim: Option<usize>) -> Self {
        Self { model, particle_dim }
    }

    fn mode(&self) -> ModeConfig {
        ModeConfig {
            finite: true,
            particle_dim: self.particle_dim,
        }
    }
}

impl FiniteField for LearnedField<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn velocity(&self, y: &[f64], z: f64) -> Result<Vec<f64>> {
        let (vy, vz) = self.model.forward(y, z)?;
        Ok(mode_transform(&vy, vz, &self.mode(), MODEL_VZ_FLOOR, None).vy)
    }

    fn velocity_and_divergence(&self, y: &[f64], z: f64) -> Result<(Vec<f64>, f64)> {
        let n = self.dim();
        check_dim(n, y.len())?;
        // tangents Π e_k with zero z-component
        let tangents: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let mut t = vec![0.0; n + 1];
                t[k] = 1.0;
                if let Some(d) = self.particle_dim {
                    zero_com_in_place(&mut t[..n], d);
                }
                t
            })
            .collect();
        let mut x = y.to_vec();
        x.push(z);
        crate::error::check_finite("field input", &x)?;
        let (out, jac) = self.model.jvp_many(&x, &tangents);
        let (vy, vz) = (&out[..n], out[n]);
        let clamped = vz < MODEL_VZ_FLOOR;
        let d = if clamped { MODEL_VZ_FLOOR } else { vz };
        let mut div = 0.0;
        for (k, j) in jac.iter().enumerate() {
            let dvz = if clamped { 0.0 } else { j[n] };
            // d(v_y / v_z) = (dv_y v_z - v_y dv_z) / v_z²
            let mut col: Vec<f64> = (0..n).map(|i| (j[i] * d - vy[i] * dvz) / (d * d)).collect();
            if let Some(sd) = self.particle_dim {
                zero_com_in_place(&mut col, sd);
            }
            div += col[k];
        }
        let v = mode_transform(vy, vz, &self.mode(), MODEL_VZ_FLOOR, None).vy;
        Ok((v, div))
    }
}

/// The conditional finite field of a flow spec, a Gaussian-path oracle.
#[derive(Clone, Debug)]
pub struct ConditionalField<'a> {
    pub spec: &'a FlowSpec,
    pub y0: Vec<f64>,
}

impl<'a> ConditionalField<'a> {
    /// Path started at the prior mean `0`.
    pub fn new(spec: &'a FlowSpec) -> Self {
        Self {
            spec,
            y0: vec![0.0; spec.dim()],
        }
    }
}

impl FiniteField for ConditionalField<'_> {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn velocity(&self, y: &[f64], z: f64) -> Result<Vec<f64>> {
        cond_field_finite(self.spec, y, z, &self.y0)
    }

    fn velocity_and_divergence(&self, y: &[f64], z: f64) -> Result<(Vec<f64>, f64)> {
        let fs = self.spec;
        let v = cond_field_finite(fs, y, z, &self.y0)?;
        let g = mean_cov_z(fs, &self.y0, z)?;
        let vz = interpolant_field(fs, z);
        // Jacobian P diag(-αᵢ + ½βᵢ²/varᵢ) Pᵀ / v_z
        let diag: Vec<f64> = (0..fs.dim())
            .map(|i| {
                let b = fs.beta[i];
                let s = if b != 0.0 { 0.5 * b * b / g.var[i] } else { 0.0 };
                (s - fs.alphas()[i]) / vz
            })
            .collect();
        let mut div: f64 = diag.iter().sum();
        if let Some(d) = fs.particle_dim {
            for u in translation_basis(fs.dim(), d) {
                let c = fs.basis().to_basis(&u);
                div -= c.iter().zip(&diag).map(|(c, l)| c * c * l).sum::<f64>();
            }
        }
        Ok((v, div))
    }
}

/// Conditional optimal-transport field toward `y1`.
#[derive(Clone, Debug)]
pub struct OtField {
    pub y1: Vec<f64>,
    pub sigma_min: f64,
}

impl FiniteField for OtField {
    fn dim(&self) -> usize {
        self.y1.len()
    }

    fn velocity(&self, y: &[f64], z: f64) -> Result<Vec<f64>> {
        ot_field(y, z, &self.y1, self.sigma_min)
    }

    fn velocity_and_divergence(&self, y: &[f64], z: f64) -> Result<(Vec<f64>, f64)> {
        let v = ot_field(y, z, &self.y1, self.sigma_min)?;
        let k = 1.0 - self.sigma_min;
        Ok((v, -(self.dim() as f64) * k / (1.0 - k * z)))
    }
}

/// `v ≡ 0`: the flow is the identity.
#[derive(Clone, Copy, Debug)]
pub struct ZeroField {
    pub dim: usize,
}

impl FiniteField for ZeroField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn velocity(&self, y: &[f64], _z: f64) -> Result<Vec<f64>> {
        check_dim(self.dim, y.len())?;
        Ok(vec![0.0; self.dim])
    }

    fn velocity_and_divergence(&self, y: &[f64], z: f64) -> Result<(Vec<f64>, f64)> {
        Ok((self.velocity(y, z)?, 0.0))
    }
}

/// `v = F y + b` with a general row-major `F`.
#[derive(Clone, Debug)]
pub struct AffineField {
    pub matrix: Vec<f64>,
    pub offset: Vec<f64>,
}

impl AffineField {
    pub fn new(matrix: Vec<f64>, offset: Vec<f64>) -> Result<Self> {
        let n = offset.len();
        if matrix.len() != n * n {
            return Err(HifmError::DimensionMismatch {
                expected: n * n,
                got: matrix.len(),
            });
        }
        Ok(Self { matrix, offset })
    }
}

impl FiniteField for AffineField {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn velocity(&self, y: &[f64], _z: f64) -> Result<Vec<f64>> {
        let n = self.dim();
        check_dim(n, y.len())?;
        Ok((0..n)
            .map(|i| self.offset[i] + crate::linalg::dot(&self.matrix[i * n..(i + 1) * n], y))
            .collect())
    }

    fn velocity_and_divergence(&self, y: &[f64], z: f64) -> Result<(Vec<f64>, f64)> {
        let n = self.dim();
        Ok((self.velocity(y, z)?, (0..n).map(|i| self.matrix[i * n + i]).sum()))
    }
}

/// Central-difference divergence, used to cross-check exact traces.
pub fn fd_divergence(field: &impl FiniteField, y: &[f64], z: f64, h: f64) -> Result<f64> {
    let mut div = 0.0;
    let mut yy = y.to_vec();
    for k in 0..field.dim() {
        yy[k] = y[k] + h;
        let p = field.velocity(&yy, z)?[k];
        yy[k] = y[k] - h;
        let m = field.velocity(&yy, z)?[k];
        yy[k] = y[k];
        div += (p - m) / (2.0 * h);
    }
    Ok(div)
}
