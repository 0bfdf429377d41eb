//! Closed-form conditional Gaussian paths of the linearized dynamics
//! `dy = -A(y - y1) dt + B dw`, their probability-flow fields in time and in
//! the interpolant state `z`, and the optimal-transport baseline.
//!
//! All per-direction quantities live in the eigenbasis of the flow spec;
//! `sigma0` entries are prior variances.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::energy::zero_com_in_place;
use crate::error::{check_dim, HifmError, Result};
use crate::linalg::{norm, sub, EigenPair};
use crate::spectrum::{build_flow_spec, FlowConfig, FlowFlags, FlowSpec};

/// Gaussian with covariance diagonal in `basis` (`None` = standard basis).
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState<'a> {
    pub mean: Vec<f64>,
    /// Variance per basis direction.
    pub var: Vec<f64>,
    pub basis: Option<&'a EigenPair>,
}

impl GaussianState<'_> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn coords(&self, x: &[f64]) -> Vec<f64> {
        match self.basis {
            Some(p) => p.to_basis(x),
            None => x.to_vec(),
        }
    }

    fn uncoords(&self, c: Vec<f64>) -> Vec<f64> {
        match self.basis {
            Some(p) => p.from_basis(&c),
            None => c,
        }
    }

    fn check_var(&self) -> Result<()> {
        match self.var.iter().position(|v| !(*v > 0.0)) {
            Some(i) => Err(HifmError::Numerical(format!(
                "variance {:e} in direction {i} is not positive",
                self.var[i]
            ))),
            None => Ok(()),
        }
    }

    /// `∇ log p(y) = -Σ⁻¹(y - µ)`.
    pub fn score(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), y.len())?;
        self.check_var()?;
        let c: Vec<f64> = self
            .coords(&sub(y, &self.mean))
            .iter()
            .zip(&self.var)
            .map(|(x, v)| -x / v)
            .collect();
        Ok(self.uncoords(c))
    }

    pub fn log_density(&self, y: &[f64]) -> Result<f64> {
        check_dim(self.dim(), y.len())?;
        self.check_var()?;
        let c = self.coords(&sub(y, &self.mean));
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        Ok(c.iter()
            .zip(&self.var)
            .map(|(x, v)| -0.5 * (x * x / v + ln2pi + v.ln()))
            .sum())
    }

    /// `µ + P diag(√var) ε`; zero-variance directions are deterministic.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let c: Vec<f64> = self
            .var
            .iter()
            .map(|v| {
                let e: f64 = rng.sample(StandardNormal);
                v.max(0.0).sqrt() * e
            })
            .collect();
        let noise = self.uncoords(c);
        self.mean.iter().zip(noise).map(|(m, n)| m + n).collect()
    }
}

/// A point on a conditional path, `x = [y, z]` with its time `t(z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathPoint {
    pub y: Vec<f64>,
    pub z: f64,
    pub t: f64,
}

/// `(1 - z)^p`, with `p = 0` giving 1 everywhere including `z = 1`.
fn pow_one_minus(z: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else {
        (p * (-z).ln_1p()).exp()
    }
}

fn check_z(z: f64, hi: f64) -> Result<()> {
    if !(0.0..=hi).contains(&z) {
        return Err(HifmError::Validation(format!("interpolant state {z} outside [0, {hi}]")));
    }
    Ok(())
}

fn check_t(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(HifmError::Validation(format!("time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// Per-direction mean factors `f` and variances for a decay `f_i` and
/// `f_i²` taking the role of `e^{-αᵢt}` and `e^{-2αᵢt}`.
fn gaussian_from_decay<'a>(fs: &'a FlowSpec, y0: &[f64], decay: impl Fn(usize) -> f64) -> Result<GaussianState<'a>> {
    check_dim(fs.dim(), y0.len())?;
    let p = fs.basis();
    let c0 = p.to_basis(&sub(y0, &fs.y1));
    let mut mc = Vec::with_capacity(fs.dim());
    let mut var = Vec::with_capacity(fs.dim());
    for (i, c) in c0.iter().enumerate() {
        let f = decay(i);
        let s = fs.stationary_variance(i);
        mc.push(f * c);
        var.push(s + f * f * (fs.sigma0[i] - s));
    }
    let mean = p.from_basis(&mc).iter().zip(&fs.y1).map(|(d, y1)| y1 + d).collect();
    Ok(GaussianState {
        mean,
        var,
        basis: Some(p),
    })
}

/// Moments of the linear SDE at time `t` from `N(y0, P diag(σ) Pᵀ)`.
pub fn mean_cov_time<'a>(fs: &'a FlowSpec, y0: &[f64], t: f64) -> Result<GaussianState<'a>> {
    check_t(t)?;
    gaussian_from_decay(fs, y0, |i| (-fs.alphas()[i] * t).exp())
}

/// Moments along the path parametrized by the interpolant state `z ∈ [0, 1]`.
pub fn mean_cov_z<'a>(fs: &'a FlowSpec, y0: &[f64], z: f64) -> Result<GaussianState<'a>> {
    check_z(z, 1.0)?;
    gaussian_from_decay(fs, y0, |i| pow_one_minus(z, fs.exponent(i)))
}

/// `µz(t) = 1 - e^{-κ α_min t}`.
pub fn interpolant_mean(fs: &FlowSpec, t: f64) -> f64 {
    -(-fs.kappa * fs.alpha_min() * t).exp_m1()
}

/// `v_z(z) = κ α_min (1 - z)`.
pub fn interpolant_field(fs: &FlowSpec, z: f64) -> f64 {
    fs.kappa * fs.alpha_min() * (1.0 - z)
}

/// Inverse of [`interpolant_mean`]: `t(z) = -ln(1 - z)/(κ α_min)`.
pub fn time_of(fs: &FlowSpec, z: f64) -> f64 {
    -(-z).ln_1p() / (fs.kappa * fs.alpha_min())
}

/// `e^{-α_min t} ‖y0 - y1‖`, an upper bound on [`mean_distance`].
pub fn distance_bound(fs: &FlowSpec, y0: &[f64], t: f64) -> Result<f64> {
    check_dim(fs.dim(), y0.len())?;
    check_t(t)?;
    Ok((-fs.alpha_min() * t).exp() * norm(&sub(y0, &fs.y1)))
}

/// Exact `‖µy(t) - µy(∞)‖` of the mean path.
pub fn mean_distance(fs: &FlowSpec, y0: &[f64], t: f64) -> Result<f64> {
    check_dim(fs.dim(), y0.len())?;
    check_t(t)?;
    let c = fs.basis().to_basis(&sub(y0, &fs.y1));
    Ok(c.iter()
        .zip(fs.alphas())
        .map(|(c, a)| if *a == 0.0 { 0.0 } else { (-a * t).exp() * c })
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt())
}

/// `v_y = -A(y - y1) + ½ B² Σ⁻¹ (y - µ)` for the path state `g`.
fn flow_field(fs: &FlowSpec, y: &[f64], g: &GaussianState) -> Result<Vec<f64>> {
    check_dim(fs.dim(), y.len())?;
    let p = fs.basis();
    let eta = p.to_basis(&sub(y, &fs.y1));
    let xi = p.to_basis(&sub(y, &g.mean));
    let mut c = Vec::with_capacity(fs.dim());
    for i in 0..fs.dim() {
        let mut v = -fs.alphas()[i] * eta[i];
        let b = fs.beta[i];
        if b != 0.0 {
            let var = g.var[i];
            if !(var > 0.0) {
                return Err(HifmError::Numerical(format!(
                    "singular path covariance in direction {i} (variance {var:e})"
                )));
            }
            v += 0.5 * b * b * xi[i] / var;
        }
        c.push(v);
    }
    Ok(p.from_basis(&c))
}

/// Probability-flow field in time together with `v_z` at `z = µz(t)`.
pub fn cond_field_time(fs: &FlowSpec, y: &[f64], t: f64, y0: &[f64]) -> Result<(Vec<f64>, f64)> {
    let g = mean_cov_time(fs, y0, t)?;
    let vy = flow_field(fs, y, &g)?;
    let vz = fs.kappa * fs.alpha_min() * (-fs.kappa * fs.alpha_min() * t).exp();
    Ok((vy, vz))
}

/// The same raw pair `(v_y, v_z)` addressed by `z` instead of `t`.
pub fn cond_field_z(fs: &FlowSpec, y: &[f64], z: f64, y0: &[f64]) -> Result<(Vec<f64>, f64)> {
    let g = mean_cov_z(fs, y0, z)?;
    let vy = flow_field(fs, y, &g)?;
    Ok((vy, interpolant_field(fs, z)))
}

/// `v_y / v_z`, the field that transports the path over `z ∈ [0, z_max]`.
pub fn cond_field_finite(fs: &FlowSpec, y: &[f64], z: f64, y0: &[f64]) -> Result<Vec<f64>> {
    check_z(z, fs.z_max)?;
    let (vy, vz) = cond_field_z(fs, y, z, y0)?;
    Ok(vy.into_iter().map(|v| v / vz).collect())
}

/// `N(z y1, (1 - (1 - σ_min) z)² I)`.
pub fn ot_path(y1: &[f64], z: f64, sigma_min: f64) -> Result<GaussianState<'static>> {
    check_z(z, 1.0)?;
    let s = 1.0 - (1.0 - sigma_min) * z;
    Ok(GaussianState {
        mean: y1.iter().map(|v| z * v).collect(),
        var: vec![s * s; y1.len()],
        basis: None,
    })
}

/// `(y1 - (1 - σ_min) y) / (1 - (1 - σ_min) z)`; `v_z` is identically 1.
pub fn ot_field(y: &[f64], z: f64, y1: &[f64], sigma_min: f64) -> Result<Vec<f64>> {
    check_dim(y1.len(), y.len())?;
    let k = 1.0 - sigma_min;
    let den = 1.0 - k * z;
    if !(den > 0.0) {
        return Err(HifmError::Numerical(format!("OT field singular at z = {z} with sigma_min = {sigma_min}")));
    }
    Ok(y1.iter().zip(y).map(|(a, b)| (a - k * b) / den).collect())
}

/// Draws `y ~ p(y | z)` from the path started at the prior mean `0`.
pub fn sample_path_point(fs: &FlowSpec, z: f64, rng: &mut impl Rng) -> Result<PathPoint> {
    sample_path_point_from(fs, &vec![0.0; fs.dim()], z, rng)
}

/// As [`sample_path_point`] with an explicit path start `y0`. Particle specs
/// project the draw onto the zero center-of-mass subspace.
pub fn sample_path_point_from(fs: &FlowSpec, y0: &[f64], z: f64, rng: &mut impl Rng) -> Result<PathPoint> {
    check_z(z, fs.z_max)?;
    let mut y = mean_cov_z(fs, y0, z)?.sample(rng);
    if let Some(d) = fs.particle_dim {
        zero_com_in_place(&mut y, d);
    }
    Ok(PathPoint { y, z, t: time_of(fs, z) })
}

/// Rate `α = -ln(ε/‖y1‖)` that brings the mean within `ε` of `y1` at `t = 1`.
pub fn isotropic_alpha_data(y1: &[f64], eps: f64) -> Result<f64> {
    let n = norm(y1);
    if !(eps > 0.0 && eps < n) {
        return Err(HifmError::Validation(format!("eps must lie in (0, ‖y1‖ = {n}), got {eps}")));
    }
    Ok(-(eps / n).ln())
}

/// Rate `α = -ln(ε)/κ` so that the interpolant reaches `1 - ε` at `t = 1`.
pub fn isotropic_alpha_interp(eps: f64, kappa: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(HifmError::Validation(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(kappa > 0.0) {
        return Err(HifmError::Validation(format!("kappa must be positive, got {kappa}")));
    }
    Ok(-eps.ln() / kappa)
}

/// A random spec in a random basis with `nulls` zero eigenvalues (at most
/// `dim - 1`), random γ, κ, prior variance and isotropize flag.
pub fn random_flow_spec(rng: &mut impl Rng, dim: usize, nulls: usize) -> FlowSpec {
    let mut diag: Vec<f64> = (0..dim).map(|_| rng.random_range(0.3..4.0)).collect();
    for d in diag.iter_mut().take(nulls.min(dim - 1)) {
        *d = 0.0;
    }
    let q = crate::linalg::random_orthogonal(dim, rng);
    let a = crate::linalg::from_spectrum(&q, &diag);
    let cfg = FlowConfig {
        c: None,
        gamma: rng.random_range(0.05..0.5),
        kappa: rng.random_range(0.5..2.0),
        sigma0: rng.random_range(0.5..1.5),
        flags: FlowFlags {
            isotropize: rng.random_bool(0.5),
            ..FlowFlags::default()
        },
        ..FlowConfig::default()
    };
    let y1 = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    build_flow_spec(y1, &a, &cfg).expect("random spectra have a positive eigenvalue")
}
