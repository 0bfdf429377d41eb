//! From a Hessian to the data that defines a conditional flow: the
//! null/hyperbolic split, condition-number rescaling, hyperbolization and the
//! per-direction diffusion coefficients.

use crate::error::{check_dim, HifmError, Result};
use crate::linalg::{eigh_sym, subspace_projector, EigenPair, SymMatrix, DEFAULT_EIG_TOL};

/// Relative threshold below which an eigenvalue is classified as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-8;
/// Largest interpolant state at which conditional target fields are evaluated.
pub const DEFAULT_Z_MAX: f64 = 1.0 - 1e-4;

/// Eigen-analysis of a Hessian at a minimum.
///
/// `raw_alphas` are the eigenvalues as decomposed (zeros snapped to exactly
/// `0.0`); `alphas` are the processed values after rescaling and
/// hyperbolization. The null mask always refers to the original spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    basis: EigenPair,
    alphas: Vec<f64>,
    null_mask: Vec<bool>,
    alpha_min: Option<f64>,
    alpha_max: f64,
}

impl Spectrum {
    /// Decomposes `a` and classifies `|αᵢ| ≤ zero_tol·max(1, α_max)` as null.
    pub fn analyze(a: &SymMatrix, zero_tol: f64) -> Result<Self> {
        let basis = eigh_sym(a, DEFAULT_EIG_TOL)?;
        Self::from_eigen(basis, zero_tol)
    }

    pub fn from_eigen(mut basis: EigenPair, zero_tol: f64) -> Result<Self> {
        let raw_max = basis.eigvals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let threshold = zero_tol * raw_max.max(1.0);
        let mut null_mask = Vec::with_capacity(basis.dim());
        for (i, a) in basis.eigvals.iter_mut().enumerate() {
            if *a < -threshold {
                return Err(HifmError::NotAMinimum {
                    index: i,
                    value: *a,
                    threshold,
                });
            }
            let is_null = a.abs() <= threshold;
            if is_null {
                *a = 0.0;
            }
            null_mask.push(is_null);
        }
        let alphas = basis.eigvals.clone();
        let mut s = Self {
            basis,
            alphas,
            null_mask,
            alpha_min: None,
            alpha_max: 0.0,
        };
        s.refresh_extrema();
        Ok(s)
    }

    /// `A = α I` in the standard basis.
    pub fn isotropic(dim: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(HifmError::Validation(format!("isotropic rate must be positive, got {alpha}")));
        }
        Self::from_eigen(EigenPair::diagonal(vec![alpha; dim]), DEFAULT_ZERO_TOL)
    }

    fn refresh_extrema(&mut self) {
        self.alpha_min = self
            .alphas
            .iter()
            .cloned()
            .filter(|a| *a != 0.0)
            .reduce(f64::min);
        self.alpha_max = self.alphas.iter().cloned().fold(0.0, f64::max);
    }

    pub fn dim(&self) -> usize {
        self.alphas.len()
    }

    pub fn basis(&self) -> &EigenPair {
        &self.basis
    }

    /// Processed eigenvalues, ascending.
    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn raw_alphas(&self) -> &[f64] {
        &self.basis.eigvals
    }

    pub fn null_mask(&self) -> &[bool] {
        &self.null_mask
    }

    pub fn hyperbolic_mask(&self) -> Vec<bool> {
        self.null_mask.iter().map(|n| !n).collect()
    }

    pub fn null_count(&self) -> usize {
        self.null_mask.iter().filter(|n| **n).count()
    }

    /// Smallest nonzero processed eigenvalue; `None` for a degenerate spectrum.
    pub fn alpha_min(&self) -> Option<f64> {
        self.alpha_min
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_max
    }

    pub fn is_degenerate(&self) -> bool {
        self.alpha_min.is_none()
    }

    pub fn condition_number(&self) -> Option<f64> {
        self.alpha_min.map(|m| self.alpha_max / m)
    }

    /// Affinely maps the nonzero eigenvalues so that `α_max/α_min = c` while
    /// `α_min` is preserved. With fewer than two distinct nonzero eigenvalues
    /// the spectrum is returned unchanged.
    pub fn rescale_condition(mut self, c: f64) -> Result<Self> {
        if !(c >= 1.0 && c.is_finite()) {
            return Err(HifmError::Validation(format!("condition number must be >= 1, got {c}")));
        }
        let Some(amin) = self.alpha_min else {
            return Ok(self);
        };
        let amax = self.alpha_max;
        if amax == amin {
            return Ok(self);
        }
        let a = (c - 1.0) * amin / (amax - amin);
        // a·α + b with b = α_min(1 - a), written to keep α_min exact
        for alpha in self.alphas.iter_mut().filter(|x| **x != 0.0) {
            *alpha = amin + a * (*alpha - amin);
        }
        self.refresh_extrema();
        Ok(self)
    }

    /// Replaces every null eigenvalue by `α_min`; the null mask is kept.
    pub fn hyperbolize(mut self) -> Result<Self> {
        let amin = self.alpha_min.ok_or(HifmError::DegenerateSpectrum)?;
        for (alpha, null) in self.alphas.iter_mut().zip(&self.null_mask) {
            if *null {
                *alpha = amin;
            }
        }
        self.refresh_extrema();
        Ok(self)
    }

    /// Diffusion coefficients βᵢ for a stationary maximum variance `gamma`.
    ///
    /// With `isotropize` every nonzero direction gets `βᵢ = √(2αᵢγ)`
    /// (stationary variance γ everywhere); otherwise `βᵢ = √(2α_min γ)`, whose
    /// largest stationary variance γ sits at `α_min`. Directions whose
    /// processed eigenvalue is zero get `βᵢ = 0`.
    pub fn diffusion_coeffs(&self, gamma: f64, isotropize: bool) -> Result<Vec<f64>> {
        if !(gamma > 0.0) {
            return Err(HifmError::Validation(format!("gamma must be positive, got {gamma}")));
        }
        let amin = self.alpha_min.unwrap_or(0.0);
        Ok(self
            .alphas
            .iter()
            .map(|&a| match (a == 0.0, isotropize) {
                (true, _) => 0.0,
                (false, true) => (2.0 * a * gamma).sqrt(),
                (false, false) => (2.0 * amin * gamma).sqrt(),
            })
            .collect())
    }

    /// Projector onto the span of the original null eigenvectors.
    pub fn null_projector(&self) -> SymMatrix {
        subspace_projector(&self.basis, &self.null_mask).expect("mask matches basis")
    }

    /// Projector onto the hyperbolic subspace (orthogonal complement of the nullspace).
    pub fn hyperbolic_projector(&self) -> SymMatrix {
        subspace_projector(&self.basis, &self.hyperbolic_mask()).expect("mask matches basis")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlowFlags {
    /// Train on `[v_y/v_z, 1]` instead of the raw `(v_y, v_z)`.
    pub finite: bool,
    /// Match fields only in the hyperbolic subspace.
    pub project: bool,
    /// Replace null eigenvalues by `α_min`.
    pub hyperbolize: bool,
    /// Choose βᵢ so every nonzero direction has stationary variance γ.
    pub isotropize: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowConfig {
    /// Target condition number; `None` keeps the raw spectrum.
    pub c: Option<f64>,
    pub gamma: f64,
    pub kappa: f64,
    /// Prior variance per eigendirection.
    pub sigma0: f64,
    pub zero_tol: f64,
    pub z_max: f64,
    pub flags: FlowFlags,
    /// Spatial dimension when the data are particle configurations with zero
    /// center of mass.
    pub particle_dim: Option<usize>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            c: Some(2.0),
            gamma: 1e-10,
            kappa: 1.0,
            sigma0: 1.0,
            zero_tol: DEFAULT_ZERO_TOL,
            z_max: DEFAULT_Z_MAX,
            flags: FlowFlags {
                finite: true,
                ..FlowFlags::default()
            },
            particle_dim: None,
        }
    }
}

/// Everything that defines one conditional probability path toward `y1`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSpec {
    pub y1: Vec<f64>,
    pub spectrum: Spectrum,
    /// Diffusion per eigendirection, zero wherever the processed α is zero.
    pub beta: Vec<f64>,
    /// Prior variance per eigendirection.
    pub sigma0: Vec<f64>,
    pub kappa: f64,
    pub gamma: f64,
    pub z_max: f64,
    pub flags: FlowFlags,
    pub particle_dim: Option<usize>,
}

impl FlowSpec {
    /// Assembles a spec from a processed spectrum, validating the invariants.
    pub fn from_parts(y1: Vec<f64>, spectrum: Spectrum, beta: Vec<f64>, cfg: &FlowConfig) -> Result<Self> {
        let n = spectrum.dim();
        check_dim(n, y1.len())?;
        check_dim(n, beta.len())?;
        if spectrum.is_degenerate() {
            return Err(HifmError::DegenerateSpectrum);
        }
        if !(cfg.kappa > 0.0) {
            return Err(HifmError::Validation(format!("kappa must be positive, got {}", cfg.kappa)));
        }
        if !(cfg.sigma0 > 0.0) {
            return Err(HifmError::Validation(format!("sigma0 must be positive, got {}", cfg.sigma0)));
        }
        if !(cfg.z_max > 0.0 && cfg.z_max < 1.0) {
            return Err(HifmError::Validation(format!("z_max must lie in (0, 1), got {}", cfg.z_max)));
        }
        for (i, (a, b)) in spectrum.alphas().iter().zip(&beta).enumerate() {
            if *a == 0.0 && *b != 0.0 {
                return Err(HifmError::Validation(format!("beta must vanish on null direction {i}")));
            }
        }
        Ok(Self {
            y1,
            spectrum,
            beta,
            sigma0: vec![cfg.sigma0; n],
            kappa: cfg.kappa,
            gamma: cfg.gamma,
            z_max: cfg.z_max,
            flags: cfg.flags,
            particle_dim: cfg.particle_dim,
        })
    }

    /// `A = α I` with diffusion chosen so the stationary variance is γ.
    pub fn isotropic(y1: Vec<f64>, alpha: f64, cfg: &FlowConfig) -> Result<Self> {
        let spectrum = Spectrum::isotropic(y1.len(), alpha)?;
        let beta = spectrum.diffusion_coeffs(cfg.gamma, true)?;
        Self::from_parts(y1, spectrum, beta, cfg)
    }

    pub fn dim(&self) -> usize {
        self.y1.len()
    }

    pub fn alpha_min(&self) -> f64 {
        self.spectrum.alpha_min().expect("flow specs are never degenerate")
    }

    pub fn alphas(&self) -> &[f64] {
        self.spectrum.alphas()
    }

    pub fn basis(&self) -> &EigenPair {
        self.spectrum.basis()
    }

    /// `βᵢ²/(2αᵢ)`, zero on null directions.
    pub fn stationary_variance(&self, i: usize) -> f64 {
        let a = self.alphas()[i];
        if a == 0.0 {
            0.0
        } else {
            self.beta[i] * self.beta[i] / (2.0 * a)
        }
    }

    /// Exponent `αᵢ/(κ α_min)` of `(1 - z)` in the interpolant-domain path.
    pub fn exponent(&self, i: usize) -> f64 {
        self.alphas()[i] / (self.kappa * self.alpha_min())
    }
}

/// Runs analyze → rescale → (hyperbolize) → diffusion on the Hessian at `y1`.
pub fn build_flow_spec(y1: Vec<f64>, a: &SymMatrix, cfg: &FlowConfig) -> Result<FlowSpec> {
    check_dim(a.dim(), y1.len())?;
    let mut s = Spectrum::analyze(a, cfg.zero_tol)?;
    if s.is_degenerate() {
        return Err(HifmError::DegenerateSpectrum);
    }
    if let Some(c) = cfg.c {
        s = s.rescale_condition(c)?;
    }
    if cfg.flags.hyperbolize {
        s = s.hyperbolize()?;
    }
    let beta = s.diffusion_coeffs(cfg.gamma, cfg.flags.isotropize)?;
    FlowSpec::from_parts(y1, s, beta, cfg)
}

/// Prior that makes the linear flow topologically conjugate on the nullspace:
/// `y0 = Π_null y1 + Π_hyp y0_raw`, with per-direction variances taken from
/// `sigma1` on null directions and from `sigma0_raw` elsewhere.
pub fn conjugate_prior(
    s: &Spectrum,
    y1: &[f64],
    y0_raw: &[f64],
    sigma1: &[f64],
    sigma0_raw: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = s.dim();
    for len in [y1.len(), y0_raw.len(), sigma1.len(), sigma0_raw.len()] {
        check_dim(n, len)?;
    }
    let c1 = s.basis().to_basis(y1);
    let c0 = s.basis().to_basis(y0_raw);
    let mixed: Vec<f64> = (0..n)
        .map(|i| if s.null_mask()[i] { c1[i] } else { c0[i] })
        .collect();
    let sigma = (0..n)
        .map(|i| if s.null_mask()[i] { sigma1[i] } else { sigma0_raw[i] })
        .collect();
    Ok((s.basis().from_basis(&mixed), sigma))
}
